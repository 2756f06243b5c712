#pragma once

#include <stdexcept>
#include <string>

namespace spdelab {

// Every failure raised by the library carries a module name and a short
// kebab-case code ("domain-exit", "cfl-violation", ...). what() renders as
// "<code>: <detail>"; qualified() prefixes the module.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string code, const std::string& detail)
      : std::runtime_error(detail.empty() ? code : code + ": " + detail),
        module_(std::move(module)),
        code_(std::move(code)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& code() const noexcept { return code_; }
  std::string qualified() const { return module_ + "/" + what(); }

 private:
  std::string module_;
  std::string code_;
};

}  // namespace spdelab
