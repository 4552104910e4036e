#include "kfmt/parsing.hpp"

#include <cctype>
#include <cmath>

#include "kfmt/error.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

std::string_view to_string(RepairStep step) {
  switch (step) {
    case RepairStep::exact: return "exact";
    case RepairStep::fence_strip: return "fence_strip";
    case RepairStep::brace_scan: return "brace_scan";
    case RepairStep::quote_normalization: return "quote_normalization";
  }
  return "unknown";
}

namespace {

// Collects the members of a top-level object without collapsing duplicate
// keys, which a DOM parse would do.
class MemberCollector {
 public:
  using number_integer_t = json::number_integer_t;
  using number_unsigned_t = json::number_unsigned_t;
  using number_float_t = json::number_float_t;
  using string_t = json::string_t;
  using binary_t = json::binary_t;

  std::vector<ObjectMember> members;
  bool top_is_object = false;

  bool null() { return scalar(json(nullptr)); }
  bool boolean(bool v) { return scalar(json(v)); }
  bool number_integer(number_integer_t v) { return scalar(json(v)); }
  bool number_unsigned(number_unsigned_t v) { return scalar(json(v)); }
  bool number_float(number_float_t v, const string_t&) { return scalar(json(v)); }
  bool string(string_t& v) { return scalar(json(v)); }
  bool binary(binary_t&) { return scalar(json(nullptr)); }

  bool start_object(std::size_t) {
    if (depth_ == 0) top_is_object = true;
    open_container();
    return true;
  }
  bool end_object() {
    --depth_;
    return true;
  }
  bool start_array(std::size_t) {
    if (depth_ == 0) return false;  // top-level arrays are not objects
    open_container();
    return true;
  }
  bool end_array() {
    --depth_;
    return true;
  }
  bool key(string_t& k) {
    if (depth_ == 1) pending_key_ = k;
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) {
    return false;
  }

 private:
  bool scalar(json v) {
    if (depth_ == 0) return false;
    if (depth_ == 1 && pending_key_) {
      members.push_back({*pending_key_, std::move(v), false});
      pending_key_.reset();
    }
    return true;
  }
  void open_container() {
    if (depth_ == 1 && pending_key_) {
      members.push_back({*pending_key_, json(nullptr), true});
      pending_key_.reset();
    }
    ++depth_;
  }

  int depth_ = 0;
  std::optional<std::string> pending_key_;
};

std::optional<std::vector<ObjectMember>> parse_object(std::string_view text) {
  auto trimmed = trim_view(text);
  if (trimmed.empty() || trimmed.front() != '{') return std::nullopt;
  MemberCollector collector;
  bool ok = json::sax_parse(trimmed.begin(), trimmed.end(), &collector);
  if (!ok || !collector.top_is_object) return std::nullopt;
  return std::move(collector.members);
}

std::vector<std::string_view> fenced_blocks(std::string_view text) {
  std::vector<std::string_view> blocks;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body = text.find('\n', open + 3);
    if (body == std::string_view::npos) break;
    ++body;
    auto close = text.find("```", body);
    if (close == std::string_view::npos) {
      blocks.push_back(text.substr(body));  // truncated output, unterminated fence
      break;
    }
    blocks.push_back(text.substr(body, close - body));
    pos = close + 3;
  }
  return blocks;
}

bool closes_string(std::string_view text, std::size_t quote_pos) {
  for (std::size_t i = quote_pos + 1; i < text.size(); ++i) {
    char c = text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
    return c == ':' || c == ',' || c == '}' || c == ']';
  }
  return true;
}

void append_escaped(std::string& out, char c) {
  switch (c) {
    case '\n': out += "\\n"; break;
    case '\r': out += "\\r"; break;
    case '\t': out += "\\t"; break;
    case '"': out += "\\\""; break;
    default:
      if (static_cast<unsigned char>(c) < 0x20) {
        out += ' ';
      } else {
        out += c;
      }
  }
}

}  // namespace

std::vector<std::string_view> brace_spans(std::string_view text) {
  std::vector<std::string_view> spans;
  std::size_t start = 0;
  while (start < text.size()) {
    auto open = text.find('{', start);
    if (open == std::string_view::npos) break;
    int depth = 0;
    bool in_string = false;
    std::size_t close = std::string_view::npos;
    for (std::size_t i = open; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        close = i;
        break;
      }
    }
    if (close == std::string_view::npos) {
      start = open + 1;
      continue;
    }
    spans.push_back(text.substr(open, close - open + 1));
    start = close + 1;
  }
  return spans;
}

std::string normalize_quotes(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 16);
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\'' || c == '"') {
      const char quote = c;
      out += '"';
      ++i;
      while (i < text.size()) {
        char d = text[i];
        if (d == '\\' && i + 1 < text.size()) {
          char e = text[i + 1];
          if (e == '\'') out += '\'';
          else {
            out += '\\';
            out += e;
          }
          i += 2;
          continue;
        }
        if (d == quote && closes_string(text, i)) break;
        append_escaped(out, d);
        ++i;
      }
      out += '"';
      ++i;
      continue;
    }
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) {
        ++i;  // trailing comma
        continue;
      }
    }
    out += c;
    ++i;
  }
  return out;
}

std::optional<ExtractedObject> extract_object(std::string_view raw) {
  const auto trimmed = trim_view(raw);

  // Candidates in ladder order; each later pass reuses them with normalization.
  std::vector<std::pair<std::string_view, RepairStep>> candidates;
  candidates.emplace_back(trimmed, RepairStep::exact);
  auto fences = fenced_blocks(trimmed);
  for (auto it = fences.rbegin(); it != fences.rend(); ++it) {
    candidates.emplace_back(*it, RepairStep::fence_strip);
  }
  auto spans = brace_spans(trimmed);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    candidates.emplace_back(*it, RepairStep::brace_scan);
  }

  for (const auto& [text, step] : candidates) {
    if (auto members = parse_object(text)) return ExtractedObject{std::move(*members), step};
  }
  for (const auto& [text, step] : candidates) {
    auto normalized = normalize_quotes(text);
    if (auto members = parse_object(normalized)) {
      return ExtractedObject{std::move(*members), RepairStep::quote_normalization};
    }
    // A normalized fence may still carry prose around the object.
    auto inner = brace_spans(normalized);
    for (auto it = inner.rbegin(); it != inner.rend(); ++it) {
      if (auto members = parse_object(*it)) {
        return ExtractedObject{std::move(*members), RepairStep::quote_normalization};
      }
    }
  }
  return std::nullopt;
}

std::optional<SentenceIndex> normalize_index_key(std::string_view key) {
  auto k = trim_view(key);
  if (!k.empty() && k.front() == '#') k = trim_view(k.substr(1));
  if (k.empty() || k.size() > 9) return std::nullopt;
  SentenceIndex value = 0;
  for (char c : k) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + static_cast<SentenceIndex>(c - '0');
  }
  return value;
}

namespace {

std::optional<std::string> member_text(const ObjectMember& m) {
  if (m.nested) return std::nullopt;
  if (m.value.is_string()) return trim(m.value.get<std::string>());
  if (m.value.is_number()) return m.value.dump();
  return std::nullopt;
}

}  // namespace

ParsedTranslationMap parse_translation_map(std::string_view raw, std::size_t expected_n) {
  if (expected_n < 1) throw Error(ErrorCode::invalid_argument, "expected_n must be >= 1");
  auto obj = extract_object(raw);
  if (!obj) throw Error(ErrorCode::unparseable, "no translation object in model output");

  ParsedTranslationMap out;
  out.step = obj->step;
  for (const auto& m : obj->members) {
    auto index = normalize_index_key(m.key);
    if (!index) {
      out.extraneous.insert(m.key);
      continue;
    }
    if (*index < 1 || *index > expected_n) {
      out.extraneous.insert(std::to_string(*index));
      continue;
    }
    if (out.segments.contains(*index)) continue;
    auto text = member_text(m);
    if (!text || text->empty()) continue;
    out.segments.emplace(*index, std::move(*text));
  }
  for (SentenceIndex i = 1; i <= expected_n; ++i) {
    if (!out.segments.contains(i)) out.missing.insert(i);
  }
  return out;
}

std::vector<EntityPair> parse_entity_pairs(std::string_view raw) {
  auto obj = extract_object(raw);
  if (!obj) throw Error(ErrorCode::unparseable, "no entity object in model output");
  std::vector<EntityPair> pairs;
  for (const auto& m : obj->members) {
    auto value = member_text(m);
    if (!value) continue;
    pairs.push_back({trim(m.key), std::move(*value)});
  }
  return dedup_entity_pairs(std::move(pairs));
}

ParsedSummary parse_summary(std::string_view raw) {
  if (is_blank(raw)) throw Error(ErrorCode::empty_input, "empty summary response");
  if (auto obj = extract_object(raw)) {
    for (const auto& m : obj->members) {
      if (to_lower_ascii(trim_view(m.key)) != "summarization") continue;
      if (auto text = member_text(m); text && !text->empty()) return {std::move(*text), false};
    }
  }
  return {trim(raw), true};
}

int parse_gpt_score(std::string_view raw) {
  auto obj = extract_object(raw);
  if (!obj) throw Error(ErrorCode::unparseable, "no score object in model output");
  for (const auto& m : obj->members) {
    if (to_lower_ascii(trim_view(m.key)) != "score" || m.nested) continue;
    double value = 0.0;
    if (m.value.is_number()) {
      value = m.value.get<double>();
    } else if (m.value.is_string()) {
      auto s = trim(m.value.get<std::string>());
      try {
        std::size_t used = 0;
        value = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorCode::unparseable, "score is not a number: " + s);
      }
    } else {
      throw Error(ErrorCode::unparseable, "score is not a number");
    }
    if (!std::isfinite(value) || value != std::floor(value)) {
      throw Error(ErrorCode::unparseable, "score is not an integer");
    }
    if (value < 0.0 || value > 100.0) {
      throw Error(ErrorCode::out_of_range, "score " + m.value.dump() + " outside 0..100");
    }
    return static_cast<int>(value);
  }
  throw Error(ErrorCode::unparseable, "object has no \"score\" key");
}

}  // namespace kfmt
