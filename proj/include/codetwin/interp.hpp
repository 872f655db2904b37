#pragma once

// Minimal tree-walking interpreter for the parser's language subset. It is
// only an oracle for checking that corpus transformations preserve meaning.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "codetwin/pyparse.hpp"

namespace codetwin::interp {

struct Value;
using List = std::vector<Value>;
using ListPtr = std::shared_ptr<List>;

struct Value {
  std::variant<std::monostate, bool, std::int64_t, double, std::string, ListPtr> v;

  Value() = default;
  Value(bool b) : v(b) {}
  Value(std::int64_t i) : v(i) {}
  Value(int i) : v(static_cast<std::int64_t>(i)) {}
  Value(double d) : v(d) {}
  Value(std::string s) : v(std::move(s)) {}
  Value(const char* s) : v(std::string(s)) {}
  Value(List l) : v(std::make_shared<List>(std::move(l))) {}

  bool is_none() const { return v.index() == 0; }
};

/// Structural equality: same type and value, lists compared element-wise.
bool same_value(const Value& a, const Value& b);
std::string repr(const Value& value);

using Environment = std::map<std::string, Value>;

bool same_environment(const Environment& a, const Environment& b);

struct ExecResult {
  Environment env;
  std::optional<Value> returned;
  std::uint64_t steps = 0;
};

inline constexpr std::uint64_t kDefaultStepLimit = 1'000'000;

/// Runs a Module. A module whose only statement is an argument-free function
/// definition runs that function's body instead. `inputs` seed the variable
/// environment. Errors (unbound names, type errors, exceeded step limit, ...)
/// raise RuntimeFault.
ExecResult run(const AstNode& module, const Environment& inputs, std::uint64_t step_limit = kDefaultStepLimit);

}  // namespace codetwin::interp
