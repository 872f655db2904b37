#include "codetwin/sbt.hpp"

namespace codetwin {

namespace {

std::string escape_value(const std::string& value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    switch (c) {
      case '_': out += "__"; break;
      case ' ': out += "_s"; break;
      case '\t': out += "_t"; break;
      case '\n': out += "_n"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_value(std::string_view text, const std::string& label) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '_') {
      out += text[i];
      continue;
    }
    if (i + 1 >= text.size()) throw MalformedSbt("dangling escape in label '" + label + "'");
    switch (text[++i]) {
      case '_': out += '_'; break;
      case 's': out += ' '; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      default: throw MalformedSbt("bad escape in label '" + label + "'");
    }
  }
  return out;
}

AstNode node_from_label(const std::string& label) {
  auto sep = label.find('_');
  std::string_view kind_text = std::string_view(label).substr(0, sep);
  auto kind = kind_from_name(kind_text);
  if (!kind) throw MalformedSbt("unknown node label '" + label + "'");
  AstNode node;
  node.kind = *kind;
  if (sep == std::string::npos) {
    if (is_value_bearing(*kind)) throw MalformedSbt("label '" + label + "' is missing its value");
  } else {
    if (!is_value_bearing(*kind)) throw MalformedSbt("label '" + label + "' must not carry a value");
    node.value = unescape_value(std::string_view(label).substr(sep + 1), label);
  }
  return node;
}

void serialize_into(const AstNode& node, SbtSequence& out) {
  std::string label = node_label(node);
  out.emplace_back(kSbtOpen);
  out.push_back(label);
  for (const auto& child : node.children) serialize_into(child, out);
  out.emplace_back(kSbtClose);
  out.push_back(std::move(label));
}

class SbtReader {
 public:
  explicit SbtReader(const SbtSequence& seq) : seq_(seq) {}

  AstNode read_all() {
    AstNode root = read_subtree();
    if (pos_ != seq_.size()) throw MalformedSbt("trailing tokens after the root subtree");
    return root;
  }

 private:
  const std::string& next(const char* what) {
    if (pos_ >= seq_.size()) throw MalformedSbt(std::string("sequence ends while expecting ") + what);
    return seq_[pos_++];
  }

  AstNode read_subtree() {
    if (next("'('") != kSbtOpen) throw MalformedSbt("expected '(' at position " + std::to_string(pos_ - 1));
    const std::string& label = next("a label");
    if (label == kSbtOpen || label == kSbtClose) throw MalformedSbt("delimiter used as a label");
    AstNode node = node_from_label(label);
    while (pos_ < seq_.size() && seq_[pos_] == kSbtOpen) node.children.push_back(read_subtree());
    if (next("')'") != kSbtClose) throw MalformedSbt("expected ')' at position " + std::to_string(pos_ - 1));
    const std::string& closing = next("a closing label");
    if (closing != label) {
      throw MalformedSbt("closing label '" + closing + "' does not match '" + label + "'");
    }
    return node;
  }

  const SbtSequence& seq_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string node_label(const AstNode& node) {
  std::string label(kind_name(node.kind));
  if (node.value) {
    label += '_';
    label += escape_value(*node.value);
  }
  return label;
}

SbtSequence sbt_serialize(const AstNode& root) {
  SbtSequence out;
  out.reserve(4 * root.node_count());
  serialize_into(root, out);
  return out;
}

AstNode sbt_parse(const SbtSequence& seq) { return SbtReader(seq).read_all(); }

std::string sbt_to_text(const SbtSequence& seq) {
  std::string out;
  for (const auto& token : seq) {
    if (!out.empty()) out += ' ';
    out += token;
  }
  return out;
}

}  // namespace codetwin
