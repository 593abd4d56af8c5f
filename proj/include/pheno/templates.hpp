#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace pheno::templates {

using Variables = std::map<std::string, std::string, std::less<>>;

/// Substitutes {{name}} placeholders. Unknown placeholders and unterminated
/// braces throw ValidationError; unused variables are ignored.
std::string render(std::string_view tmpl, const Variables& vars);

/// Named prompt templates. The built-in set is compiled from templates/v1;
/// a directory of <name>.tmpl files overrides entries by name.
class TemplateRegistry {
public:
  static const TemplateRegistry& builtin();
  /// Built-ins overlaid with every *.tmpl in `dir` (and its VERSION file).
  static TemplateRegistry load(const std::filesystem::path& dir);

  /// Throws ValidationError for unknown names.
  const std::string& get(std::string_view name) const;
  std::string render(std::string_view name, const Variables& vars) const;

  const std::string& version() const { return version_; }
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::string version_;
};

}  // namespace pheno::templates
