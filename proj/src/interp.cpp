#include "codetwin/interp.hpp"

#include <cmath>

#include "codetwin/errors.hpp"
#include "codetwin/textio.hpp"

namespace codetwin::interp {

namespace {

enum Tag { kNone = 0, kBool, kInt, kFloat, kStr, kList };

Tag tag(const Value& x) { return static_cast<Tag>(x.v.index()); }

[[noreturn]] void fault(const std::string& msg) { throw RuntimeFault(msg); }

std::string type_name(const Value& x) {
  static const char* names[] = {"NoneType", "bool", "int", "float", "str", "list"};
  return names[x.v.index()];
}

bool is_number(const Value& x) { return tag(x) == kBool || tag(x) == kInt || tag(x) == kFloat; }
bool is_integral(const Value& x) { return tag(x) == kBool || tag(x) == kInt; }

std::int64_t as_int(const Value& x) {
  if (tag(x) == kBool) return std::get<bool>(x.v) ? 1 : 0;
  if (tag(x) == kInt) return std::get<std::int64_t>(x.v);
  fault("expected an integer, got " + type_name(x));
}

double as_double(const Value& x) {
  if (tag(x) == kFloat) return std::get<double>(x.v);
  return static_cast<double>(as_int(x));
}

bool truthy(const Value& x) {
  switch (tag(x)) {
    case kNone: return false;
    case kBool: return std::get<bool>(x.v);
    case kInt: return std::get<std::int64_t>(x.v) != 0;
    case kFloat: return std::get<double>(x.v) != 0.0;
    case kStr: return !std::get<std::string>(x.v).empty();
    case kList: return !std::get<ListPtr>(x.v)->empty();
  }
  return false;
}

// Two's-complement wrapping arithmetic.
std::int64_t wrap_add(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}
std::int64_t wrap_sub(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
}
std::int64_t wrap_mul(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  if (b == 0) fault("integer division by zero");
  if (a == INT64_MIN && b == -1) return INT64_MIN;
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  if (b == 0) fault("integer modulo by zero");
  if (b == -1) return 0;
  std::int64_t r = a % b;
  if (r != 0 && ((r < 0) != (b < 0))) r += b;
  return r;
}

bool numeric_equal(const Value& a, const Value& b) {
  if (is_integral(a) && is_integral(b)) return as_int(a) == as_int(b);
  return as_double(a) == as_double(b);
}

bool loose_equal(const Value& a, const Value& b) {
  if (is_number(a) && is_number(b)) return numeric_equal(a, b);
  if (tag(a) != tag(b)) return false;
  switch (tag(a)) {
    case kNone: return true;
    case kStr: return std::get<std::string>(a.v) == std::get<std::string>(b.v);
    case kList: {
      const auto& la = *std::get<ListPtr>(a.v);
      const auto& lb = *std::get<ListPtr>(b.v);
      if (la.size() != lb.size()) return false;
      for (std::size_t i = 0; i < la.size(); ++i) {
        if (!loose_equal(la[i], lb[i])) return false;
      }
      return true;
    }
    default: return false;
  }
}

// Negative, zero or positive like a three-way compare.
int order(const Value& a, const Value& b) {
  if (is_number(a) && is_number(b)) {
    if (is_integral(a) && is_integral(b)) {
      auto x = as_int(a), y = as_int(b);
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    double x = as_double(a), y = as_double(b);
    if (std::isnan(x) || std::isnan(y)) fault("ordering comparison with nan");
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (tag(a) == kStr && tag(b) == kStr) {
    int c = std::get<std::string>(a.v).compare(std::get<std::string>(b.v));
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  if (tag(a) == kList && tag(b) == kList) {
    const auto& la = *std::get<ListPtr>(a.v);
    const auto& lb = *std::get<ListPtr>(b.v);
    for (std::size_t i = 0; i < la.size() && i < lb.size(); ++i) {
      if (!loose_equal(la[i], lb[i])) return order(la[i], lb[i]);
    }
    return la.size() < lb.size() ? -1 : (la.size() > lb.size() ? 1 : 0);
  }
  fault("cannot order " + type_name(a) + " and " + type_name(b));
}

std::size_t normalize_index(std::int64_t i, std::size_t n) {
  if (i < 0) i += static_cast<std::int64_t>(n);
  if (i < 0 || static_cast<std::size_t>(i) >= n) fault("index out of range");
  return static_cast<std::size_t>(i);
}

Value repeat(const Value& seq, std::int64_t times) {
  if (times < 0) times = 0;
  if (times > 100000) fault("repetition too large");
  if (tag(seq) == kStr) {
    std::string out;
    for (std::int64_t i = 0; i < times; ++i) out += std::get<std::string>(seq.v);
    return Value(std::move(out));
  }
  List out;
  const auto& l = *std::get<ListPtr>(seq.v);
  for (std::int64_t i = 0; i < times; ++i) out.insert(out.end(), l.begin(), l.end());
  return Value(std::move(out));
}

Value binop(const std::string& op, const Value& a, const Value& b) {
  if (op == "Add") {
    if (tag(a) == kStr && tag(b) == kStr) return Value(std::get<std::string>(a.v) + std::get<std::string>(b.v));
    if (tag(a) == kList && tag(b) == kList) {
      List out = *std::get<ListPtr>(a.v);
      const auto& r = *std::get<ListPtr>(b.v);
      out.insert(out.end(), r.begin(), r.end());
      return Value(std::move(out));
    }
  }
  if (op == "Mult") {
    if ((tag(a) == kStr || tag(a) == kList) && is_integral(b)) return repeat(a, as_int(b));
    if ((tag(b) == kStr || tag(b) == kList) && is_integral(a)) return repeat(b, as_int(a));
  }
  if (!is_number(a) || !is_number(b)) fault("unsupported operands for " + op + ": " + type_name(a) + ", " + type_name(b));

  const bool ints = is_integral(a) && is_integral(b);
  if (op == "Div") {
    if (as_double(b) == 0.0) fault("division by zero");
    return Value(as_double(a) / as_double(b));
  }
  if (ints) {
    const std::int64_t x = as_int(a), y = as_int(b);
    if (op == "Add") return Value(wrap_add(x, y));
    if (op == "Sub") return Value(wrap_sub(x, y));
    if (op == "Mult") return Value(wrap_mul(x, y));
    if (op == "FloorDiv") return Value(floor_div(x, y));
    if (op == "Mod") return Value(floor_mod(x, y));
    if (op == "Pow") {
      if (y < 0) {
        if (x == 0) fault("zero to a negative power");
        return Value(std::pow(static_cast<double>(x), static_cast<double>(y)));
      }
      std::int64_t result = 1, base = x, e = y;
      while (e > 0) {
        if (e & 1) result = wrap_mul(result, base);
        base = wrap_mul(base, base);
        e >>= 1;
      }
      return Value(result);
    }
    if (op == "LShift" || op == "RShift") {
      if (y < 0) fault("negative shift count");
      if (op == "RShift") return Value(y >= 64 ? (x < 0 ? std::int64_t{-1} : 0) : x >> y);
      if (y >= 64) return Value(std::int64_t{0});
      return Value(static_cast<std::int64_t>(static_cast<std::uint64_t>(x) << y));
    }
    if (op == "BitAnd") return Value(x & y);
    if (op == "BitOr") return Value(x | y);
    if (op == "BitXor") return Value(x ^ y);
  } else {
    const double x = as_double(a), y = as_double(b);
    if (op == "Add") return Value(x + y);
    if (op == "Sub") return Value(x - y);
    if (op == "Mult") return Value(x * y);
    if (op == "FloorDiv") {
      if (y == 0.0) fault("division by zero");
      return Value(std::floor(x / y));
    }
    if (op == "Mod") {
      if (y == 0.0) fault("modulo by zero");
      double r = std::fmod(x, y);
      if (r != 0.0 && ((r < 0) != (y < 0))) r += y;
      return Value(r);
    }
    if (op == "Pow") return Value(std::pow(x, y));
  }
  fault("unsupported operator " + op + " for " + type_name(a) + ", " + type_name(b));
}

bool contains(const Value& container, const Value& item) {
  if (tag(container) == kList) {
    for (const auto& x : *std::get<ListPtr>(container.v)) {
      if (loose_equal(x, item)) return true;
    }
    return false;
  }
  if (tag(container) == kStr && tag(item) == kStr) {
    return std::get<std::string>(container.v).find(std::get<std::string>(item.v)) != std::string::npos;
  }
  fault("'in' needs a list or string");
}

bool identical(const Value& a, const Value& b) {
  if (tag(a) != tag(b)) return false;
  if (tag(a) == kList) return std::get<ListPtr>(a.v) == std::get<ListPtr>(b.v);
  return loose_equal(a, b);
}

bool compare(const std::string& op, const Value& a, const Value& b) {
  if (op == "Eq") return loose_equal(a, b);
  if (op == "NotEq") return !loose_equal(a, b);
  if (op == "Lt") return order(a, b) < 0;
  if (op == "LtE") return order(a, b) <= 0;
  if (op == "Gt") return order(a, b) > 0;
  if (op == "GtE") return order(a, b) >= 0;
  if (op == "Is") return identical(a, b);
  if (op == "IsNot") return !identical(a, b);
  if (op == "In") return contains(b, a);
  if (op == "NotIn") return !contains(b, a);
  fault("unknown comparison " + op);
}

std::string decode_string_literal(const std::string& lit) {
  std::size_t q = (lit.size() >= 6 && (lit.rfind("\"\"\"", 0) == 0 || lit.rfind("'''", 0) == 0)) ? 3 : 1;
  if (lit.size() < 2 * q) fault("malformed string literal");
  std::string_view body(lit.data() + q, lit.size() - 2 * q);
  std::string out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '\\' || i + 1 == body.size()) {
      out += body[i];
      continue;
    }
    char c = body[++i];
    switch (c) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '\\': out += '\\'; break;
      case '\'': out += '\''; break;
      case '"': out += '"'; break;
      case '\n': break;
      default: out += '\\'; out += c;
    }
  }
  return out;
}


class Machine {
 public:
  explicit Machine(std::uint64_t limit) : limit_(limit) {}

  std::uint64_t steps() const { return steps_; }

  // Returns the value of a `return` statement if one ran.
  std::optional<Value> exec_block(const std::vector<AstNode>& stmts, std::size_t first, Environment& env) {
    for (std::size_t i = first; i < stmts.size(); ++i) {
      if (auto r = exec(stmts[i], env)) return r;
    }
    return std::nullopt;
  }

 private:
  void tick() {
    if (++steps_ > limit_) fault("step limit exceeded");
  }

  std::optional<Value> exec(const AstNode& s, Environment& env) {
    tick();
    switch (s.kind) {
      case NodeKind::Expr:
        eval(s.children.at(0), env);
        return std::nullopt;
      case NodeKind::Assign:
        assign(s.children.at(0), eval(s.children.at(1), env), env);
        return std::nullopt;
      case NodeKind::AugAssign: {
        const AstNode& target = s.children.at(0);
        Value current = eval(target, env);
        Value rhs = eval(s.children.at(1), env);
        if (*s.value == "Add" && tag(current) == kList && tag(rhs) == kList) {
          // In-place extension, visible through every alias.
          auto& l = *std::get<ListPtr>(current.v);
          List extra = *std::get<ListPtr>(rhs.v);
          l.insert(l.end(), extra.begin(), extra.end());
          return std::nullopt;
        }
        assign(target, binop(*s.value, current, rhs), env);
        return std::nullopt;
      }
      case NodeKind::Return:
        return s.children.empty() ? Value() : eval(s.children[0], env);
      case NodeKind::If: {
        if (truthy(eval(s.children.at(0), env))) {
          std::size_t end = s.children.size();
          if (end > 1 && s.children.back().kind == NodeKind::Else) --end;
          for (std::size_t i = 1; i < end; ++i) {
            if (auto r = exec(s.children[i], env)) return r;
          }
          return std::nullopt;
        }
        if (s.children.size() > 1 && s.children.back().kind == NodeKind::Else) {
          return exec_block(s.children.back().children, 0, env);
        }
        return std::nullopt;
      }
      case NodeKind::While:
        while (truthy(eval(s.children.at(0), env))) {
          tick();
          if (auto r = exec_block(s.children, 1, env)) return r;
        }
        return std::nullopt;
      case NodeKind::For: {
        Value iter = eval(s.children.at(1), env);
        List items;
        if (tag(iter) == kList) {
          items = *std::get<ListPtr>(iter.v);
        } else if (tag(iter) == kStr) {
          for (char c : std::get<std::string>(iter.v)) items.emplace_back(std::string(1, c));
        } else {
          fault("cannot iterate over " + type_name(iter));
        }
        for (auto& item : items) {
          tick();
          assign(s.children[0], item, env);
          if (auto r = exec_block(s.children, 2, env)) return r;
        }
        return std::nullopt;
      }
      case NodeKind::FunctionDef:
        functions_[*s.value] = &s;
        return std::nullopt;
      default:
        fault("cannot execute " + std::string(kind_name(s.kind)));
    }
  }

  void assign(const AstNode& target, Value value, Environment& env) {
    if (target.kind == NodeKind::Name) {
      env[*target.value] = std::move(value);
      return;
    }
    if (target.kind == NodeKind::Subscript) {
      Value container = eval(target.children.at(0), env);
      Value index = eval(target.children.at(1), env);
      if (tag(container) != kList) fault("item assignment needs a list");
      auto& l = *std::get<ListPtr>(container.v);
      l[normalize_index(as_int(index), l.size())] = std::move(value);
      return;
    }
    fault("invalid assignment target");
  }

  Value lookup(const std::string& name, const Environment& env) {
    if (auto it = env.find(name); it != env.end()) return it->second;
    if (globals_ && globals_ != &env) {
      if (auto it = globals_->find(name); it != globals_->end()) return it->second;
    }
    if (name == "True") return Value(true);
    if (name == "False") return Value(false);
    if (name == "None") return Value();
    fault("name '" + name + "' is not defined");
  }

  Value eval(const AstNode& e, Environment& env) {
    tick();
    switch (e.kind) {
      case NodeKind::Name:
        return lookup(*e.value, env);
      case NodeKind::Num: {
        std::int64_t v = 0;
        for (char c : *e.value) {
          if (c < '0' || c > '9') fault("unsupported numeric literal " + *e.value);
          v = wrap_add(wrap_mul(v, 10), c - '0');
        }
        return Value(v);
      }
      case NodeKind::Str:
        return Value(decode_string_literal(*e.value));
      case NodeKind::List: {
        List out;
        for (const auto& c : e.children) out.push_back(eval(c, env));
        return Value(std::move(out));
      }
      case NodeKind::BinOp:
        return binop(*e.value, eval(e.children.at(0), env), eval(e.children.at(1), env));
      case NodeKind::UnaryOp: {
        Value x = eval(e.children.at(0), env);
        if (*e.value == "Not") return Value(!truthy(x));
        if (*e.value == "USub") {
          if (tag(x) == kFloat) return Value(-std::get<double>(x.v));
          return Value(wrap_sub(0, as_int(x)));
        }
        if (*e.value == "UAdd") {
          if (tag(x) == kFloat) return x;
          return Value(as_int(x));
        }
        return Value(~as_int(x));
      }
      case NodeKind::BoolOp: {
        Value left = eval(e.children.at(0), env);
        const bool is_and = *e.value == "And";
        if (truthy(left) != is_and) return left;
        return eval(e.children.at(1), env);
      }
      case NodeKind::Compare:
        return Value(compare(*e.value, eval(e.children.at(0), env), eval(e.children.at(1), env)));
      case NodeKind::Subscript: {
        Value container = eval(e.children.at(0), env);
        std::int64_t i = as_int(eval(e.children.at(1), env));
        if (tag(container) == kList) {
          const auto& l = *std::get<ListPtr>(container.v);
          return l[normalize_index(i, l.size())];
        }
        if (tag(container) == kStr) {
          const auto& s = std::get<std::string>(container.v);
          return Value(std::string(1, s[normalize_index(i, s.size())]));
        }
        fault("cannot subscript " + type_name(container));
      }
      case NodeKind::Call:
        return call(e, env);
      default:
        fault("cannot evaluate " + std::string(kind_name(e.kind)));
    }
  }

  Value call(const AstNode& e, Environment& env) {
    const AstNode& func = e.children.at(0);
    if (func.kind != NodeKind::Name) fault("only named functions can be called");
    std::vector<Value> args;
    for (std::size_t i = 1; i < e.children.size(); ++i) args.push_back(eval(e.children[i], env));
    const std::string& name = *func.value;
    if (auto it = functions_.find(name); it != functions_.end()) return call_user(*it->second, std::move(args));
    return builtin(name, args);
  }

  Value call_user(const AstNode& def, std::vector<Value> args) {
    const AstNode& params = def.children.at(0);
    if (params.children.size() != args.size()) fault("wrong number of arguments to " + *def.value);
    if (++depth_ > 64) fault("recursion too deep");
    Environment local;
    for (std::size_t i = 0; i < args.size(); ++i) local[*params.children[i].value] = std::move(args[i]);
    auto r = exec_block(def.children, 1, local);
    --depth_;
    return r ? *r : Value();
  }

  Value builtin(const std::string& name, const std::vector<Value>& args) {
    auto need = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi) fault("wrong number of arguments to " + name);
    };
    if (name == "range") {
      need(1, 3);
      std::int64_t start = 0, stop = 0, step = 1;
      if (args.size() == 1) {
        stop = as_int(args[0]);
      } else {
        start = as_int(args[0]);
        stop = as_int(args[1]);
        if (args.size() == 3) step = as_int(args[2]);
      }
      if (step == 0) fault("range step must not be zero");
      List out;
      for (std::int64_t i = start; step > 0 ? i < stop : i > stop; i += step) {
        tick();
        out.emplace_back(i);
      }
      return Value(std::move(out));
    }
    if (name == "len") {
      need(1, 1);
      if (tag(args[0]) == kList) return Value(static_cast<std::int64_t>(std::get<ListPtr>(args[0].v)->size()));
      if (tag(args[0]) == kStr) return Value(static_cast<std::int64_t>(std::get<std::string>(args[0].v).size()));
      fault("len of " + type_name(args[0]));
    }
    if (name == "abs") {
      need(1, 1);
      if (tag(args[0]) == kFloat) return Value(std::fabs(std::get<double>(args[0].v)));
      std::int64_t x = as_int(args[0]);
      return Value(x < 0 ? wrap_sub(0, x) : x);
    }
    if (name == "min" || name == "max") {
      need(1, 64);
      List items = args;
      if (args.size() == 1) {
        if (tag(args[0]) != kList) fault(name + " of a non-list");
        items = *std::get<ListPtr>(args[0].v);
      }
      if (items.empty()) fault(name + " of an empty sequence");
      Value best = items[0];
      for (std::size_t i = 1; i < items.size(); ++i) {
        int c = order(items[i], best);
        if (name == "min" ? c < 0 : c > 0) best = items[i];
      }
      return best;
    }
    if (name == "sum") {
      need(1, 1);
      if (tag(args[0]) != kList) fault("sum of a non-list");
      Value total(std::int64_t{0});
      for (const auto& x : *std::get<ListPtr>(args[0].v)) total = binop("Add", total, x);
      return total;
    }
    if (name == "str") {
      need(1, 1);
      if (tag(args[0]) == kStr) return args[0];
      return Value(repr(args[0]));
    }
    if (name == "int") {
      need(1, 1);
      if (tag(args[0]) == kFloat) {
        double d = std::trunc(std::get<double>(args[0].v));
        if (!std::isfinite(d) || std::fabs(d) > 9.2e18) fault("int of an out-of-range float");
        return Value(static_cast<std::int64_t>(d));
      }
      if (tag(args[0]) == kStr) {
        const auto& s = std::get<std::string>(args[0].v);
        std::size_t used = 0;
        std::int64_t v = 0;
        try {
          v = std::stoll(s, &used);
        } catch (const std::exception&) {
          fault("invalid literal for int(): '" + s + "'");
        }
        if (used != s.size()) fault("invalid literal for int(): '" + s + "'");
        return Value(v);
      }
      return Value(as_int(args[0]));
    }
    fault("unknown function '" + name + "'");
  }

 public:
  const Environment* globals_ = nullptr;

 private:
  std::uint64_t limit_;
  std::uint64_t steps_ = 0;
  int depth_ = 0;
  std::map<std::string, const AstNode*> functions_;
};

}  // namespace

bool same_value(const Value& a, const Value& b) {
  if (tag(a) != tag(b)) return false;
  switch (tag(a)) {
    case kNone: return true;
    case kBool: return std::get<bool>(a.v) == std::get<bool>(b.v);
    case kInt: return std::get<std::int64_t>(a.v) == std::get<std::int64_t>(b.v);
    case kFloat: {
      double x = std::get<double>(a.v), y = std::get<double>(b.v);
      return x == y || (std::isnan(x) && std::isnan(y));
    }
    case kStr: return std::get<std::string>(a.v) == std::get<std::string>(b.v);
    case kList: {
      const auto& la = *std::get<ListPtr>(a.v);
      const auto& lb = *std::get<ListPtr>(b.v);
      if (la.size() != lb.size()) return false;
      for (std::size_t i = 0; i < la.size(); ++i) {
        if (!same_value(la[i], lb[i])) return false;
      }
      return true;
    }
  }
  return false;
}

std::string repr(const Value& x) {
  switch (tag(x)) {
    case kNone: return "None";
    case kBool: return std::get<bool>(x.v) ? "True" : "False";
    case kInt: return std::to_string(std::get<std::int64_t>(x.v));
    case kFloat: {
      double d = std::get<double>(x.v);
      if (std::isnan(d)) return "nan";
      if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
      std::string s = format_double(d);
      if (s.find_first_of(".en") == std::string::npos) s += ".0";
      return s;
    }
    case kStr: return "'" + std::get<std::string>(x.v) + "'";
    case kList: {
      std::string out = "[";
      const auto& l = *std::get<ListPtr>(x.v);
      for (std::size_t i = 0; i < l.size(); ++i) out += (i ? ", " : "") + repr(l[i]);
      return out + "]";
    }
  }
  return "?";
}

bool same_environment(const Environment& a, const Environment& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !same_value(ia->second, ib->second)) return false;
  }
  return true;
}

ExecResult run(const AstNode& module, const Environment& inputs, std::uint64_t step_limit) {
  if (module.kind != NodeKind::Module) throw InvalidRoot("interpreter expects a Module root");
  // Deep-copy list inputs so runs never share mutable state.
  ExecResult result;
  for (const auto& [k, v] : inputs) {
    Value copy = v;
    if (tag(v) == kList) copy = Value(List(*std::get<ListPtr>(v.v)));
    result.env[k] = std::move(copy);
  }
  Machine m(step_limit);
  m.globals_ = &result.env;
  const std::vector<AstNode>* body = &module.children;
  std::size_t first = 0;
  if (module.children.size() == 1 && module.children[0].kind == NodeKind::FunctionDef &&
      module.children[0].children.at(0).children.empty()) {
    body = &module.children[0].children;
    first = 1;
  }
  result.returned = m.exec_block(*body, first, result.env);
  result.steps = m.steps();
  return result;
}

}  // namespace codetwin::interp
