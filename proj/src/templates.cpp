#include "pheno/templates.hpp"

#include <string_view>
#include <utility>
#include <vector>

#include "pheno/error.hpp"
#include "pheno/util.hpp"

namespace pheno::detail {
// Generated at build time from templates/v1.
extern const std::vector<std::pair<std::string_view, std::string_view>> kBuiltinTemplates;
extern const std::string_view kBuiltinTemplateVersion;
}  // namespace pheno::detail

namespace pheno::templates {

std::string render(std::string_view tmpl, const Variables& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw ValidationError("unterminated placeholder in template");
    const auto name = tmpl.substr(open + 2, close - open - 2);
    const auto it = vars.find(name);
    if (it == vars.end()) throw ValidationError("template placeholder {{" + std::string(name) + "}} has no value");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

const TemplateRegistry& TemplateRegistry::builtin() {
  static const TemplateRegistry registry = [] {
    TemplateRegistry r;
    for (const auto& [name, text] : detail::kBuiltinTemplates) r.entries_.emplace(name, text);
    r.version_ = std::string(detail::kBuiltinTemplateVersion);
    return r;
  }();
  return registry;
}

TemplateRegistry TemplateRegistry::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("template directory not found: " + dir.string());
  TemplateRegistry r = builtin();
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto& path = entry.path();
    if (path.filename() == "VERSION") {
      r.version_ = io::trim(io::read_file(path));
      continue;
    }
    if (path.extension() != ".tmpl") continue;
    auto text = io::read_file(path);
    if (!text.empty() && text.back() == '\n') text.pop_back();
    r.entries_[path.stem().string()] = std::move(text);
  }
  return r;
}

const std::string& TemplateRegistry::get(std::string_view name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown template \"" + std::string(name) + "\"");
  return it->second;
}

std::string TemplateRegistry::render(std::string_view name, const Variables& vars) const {
  return templates::render(get(name), vars);
}

}  // namespace pheno::templates
