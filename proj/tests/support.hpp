#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "pheno/util.hpp"

namespace test_support {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(PHENO_FIXTURES) / name; }

inline std::string read_fixture(const std::string& name) { return pheno::io::read_file(fixture(name)); }

/// Fresh, empty scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path(PHENO_SCRATCH) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  out << contents;
}

}  // namespace test_support
