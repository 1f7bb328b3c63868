#include "specvae/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace specvae {
namespace {

[[noreturn]] void fail(int line_no, const std::string& what) {
  throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + what);
}

// strips whitespace and any comment that starts outside a quoted string
std::string strip_line(const std::string& raw, int line_no) {
  std::string out;
  bool in_quote = false;
  for (char c : raw) {
    if (c == '"') in_quote = !in_quote;
    if (c == '#' && !in_quote) break;
    out.push_back(c);
  }
  if (in_quote) fail(line_no, "unterminated string");
  const auto begin = out.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = out.find_last_not_of(" \t\r");
  return out.substr(begin, end - begin + 1);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

ConfigValue parse_scalar(const std::string& token, int line_no) {
  if (token == "true") return ConfigValue::make_bool(true);
  if (token == "false") return ConfigValue::make_bool(false);
  if (token.size() >= 2 && token.front() == '"' && token.back() == '"') {
    std::string text;
    for (std::size_t i = 1; i + 1 < token.size(); ++i) {
      if (token[i] == '\\' && i + 2 < token.size() &&
          (token[i + 1] == '"' || token[i + 1] == '\\')) {
        text.push_back(token[i + 1]);
        ++i;
      } else if (token[i] == '"') {
        fail(line_no, "unescaped quote inside string");
      } else {
        text.push_back(token[i]);
      }
    }
    return ConfigValue::make_string(std::move(text));
  }
  double number = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, number);
  if (ec == std::errc() && ptr == last) return ConfigValue::make_number(number);
  fail(line_no, "cannot parse value '" + token + "'");
}

ConfigValue parse_value(const std::string& token, int line_no) {
  if (token.empty()) fail(line_no, "missing value");
  if (token.front() != '[') return parse_scalar(token, line_no);
  if (token.back() != ']') fail(line_no, "unterminated array");

  std::vector<ConfigValue> items;
  std::string body = token.substr(1, token.size() - 2);
  std::string current;
  bool in_quote = false;
  auto flush = [&] {
    const auto begin = current.find_first_not_of(" \t");
    if (begin == std::string::npos) {
      if (!items.empty()) fail(line_no, "empty array element");
      current.clear();
      return;
    }
    const auto end = current.find_last_not_of(" \t");
    items.push_back(parse_scalar(current.substr(begin, end - begin + 1), line_no));
    current.clear();
  };
  for (char c : body) {
    if (c == '"') in_quote = !in_quote;
    if (c == ',' && !in_quote) {
      flush();
      continue;
    }
    current.push_back(c);
  }
  if (current.find_first_not_of(" \t") != std::string::npos) flush();
  for (const ConfigValue& v : items)
    if (v.kind == ConfigValue::Kind::array) fail(line_no, "nested arrays unsupported");
  return ConfigValue::make_array(std::move(items));
}

const ConfigValue* find(const RunConfig& cfg, const std::string& key) {
  const auto it = cfg.values.find(key);
  return it == cfg.values.end() ? nullptr : &it->second;
}

[[noreturn]] void wrong_kind(const std::string& key, const std::string& want) {
  throw std::invalid_argument("config key '" + key + "': expected " + want);
}

}  // namespace

ConfigValue ConfigValue::make_bool(bool v) {
  ConfigValue c;
  c.kind = Kind::boolean;
  c.boolean = v;
  return c;
}

ConfigValue ConfigValue::make_number(double v) {
  ConfigValue c;
  c.kind = Kind::number;
  c.number = v;
  return c;
}

ConfigValue ConfigValue::make_string(std::string v) {
  ConfigValue c;
  c.kind = Kind::string;
  c.text = std::move(v);
  return c;
}

ConfigValue ConfigValue::make_array(std::vector<ConfigValue> v) {
  ConfigValue c;
  c.kind = Kind::array;
  c.items = std::move(v);
  return c;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const ConfigValue* v = find(*this, key);
  if (!v) return fallback;
  if (v->kind != ConfigValue::Kind::boolean) wrong_kind(key, "a boolean");
  return v->boolean;
}

double RunConfig::get_number(const std::string& key, double fallback) const {
  const ConfigValue* v = find(*this, key);
  if (!v) return fallback;
  if (v->kind != ConfigValue::Kind::number) wrong_kind(key, "a number");
  return v->number;
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const ConfigValue* v = find(*this, key);
  if (!v) return fallback;
  if (v->kind != ConfigValue::Kind::number) wrong_kind(key, "a number");
  const auto i = std::int64_t(v->number);
  if (double(i) != v->number) wrong_kind(key, "an integer");
  return i;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  const ConfigValue* v = find(*this, key);
  if (!v) return fallback;
  if (v->kind != ConfigValue::Kind::string) wrong_kind(key, "a string");
  return v->text;
}

std::vector<double> RunConfig::get_numbers(const std::string& key,
                                           const std::vector<double>& fallback) const {
  const ConfigValue* v = find(*this, key);
  if (!v) return fallback;
  if (v->kind == ConfigValue::Kind::number) return {v->number};
  if (v->kind != ConfigValue::Kind::array) wrong_kind(key, "an array of numbers");
  std::vector<double> out;
  for (const ConfigValue& item : v->items) {
    if (item.kind != ConfigValue::Kind::number) wrong_kind(key, "an array of numbers");
    out.push_back(item.number);
  }
  return out;
}

std::vector<std::string> RunConfig::get_strings(
    const std::string& key, const std::vector<std::string>& fallback) const {
  const ConfigValue* v = find(*this, key);
  if (!v) return fallback;
  if (v->kind == ConfigValue::Kind::string) return {v->text};
  if (v->kind != ConfigValue::Kind::array) wrong_kind(key, "an array of strings");
  std::vector<std::string> out;
  for (const ConfigValue& item : v->items) {
    if (item.kind != ConfigValue::Kind::string) wrong_kind(key, "an array of strings");
    out.push_back(item.text);
  }
  return out;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::string section;
  std::istringstream stream(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const std::string line = strip_line(raw, line_no);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (!valid_key(section)) fail(line_no, "bad section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    std::string key = strip_line(line.substr(0, eq), line_no);
    const std::string value = strip_line(line.substr(eq + 1), line_no);
    if (!valid_key(key)) fail(line_no, "bad key '" + key + "'");
    if (!section.empty()) key = section + "." + key;
    if (cfg.values.count(key)) fail(line_no, "duplicate key '" + key + "'");
    cfg.values.emplace(key, parse_value(value, line_no));
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void reject_unknown_keys(const RunConfig& cfg, const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : cfg.values)
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
}

nlohmann::ordered_json config_json(const RunConfig& cfg) {
  using nlohmann::ordered_json;
  ordered_json j = ordered_json::object();
  for (const auto& [key, value] : cfg.values) {
    auto scalar = [](const ConfigValue& v) -> ordered_json {
      switch (v.kind) {
        case ConfigValue::Kind::boolean: return v.boolean;
        case ConfigValue::Kind::number: return v.number;
        case ConfigValue::Kind::string: return v.text;
        case ConfigValue::Kind::array: break;
      }
      throw std::invalid_argument("config: nested array");  // parser forbids this
    };
    if (value.kind == ConfigValue::Kind::array) {
      ordered_json arr = ordered_json::array();
      for (const ConfigValue& item : value.items) arr.push_back(scalar(item));
      j[key] = std::move(arr);
    } else {
      j[key] = scalar(value);
    }
  }
  return j;
}

}  // namespace specvae
