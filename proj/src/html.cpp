#include "onioncrawl/html.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>

namespace onioncrawl::html {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_name_char(char c) {
  const auto uc = static_cast<unsigned char>(c);
  return std::isalnum(uc) || c == '-' || c == ':' || c == '_';
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Case-insensitive search for needle (given lowercase) from pos.
std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t pos) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = pos; i + needle.size() <= hay.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size(); ++k) {
      if (std::tolower(static_cast<unsigned char>(hay[i + k])) != needle[k]) {
        match = false;
        break;
      }
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

}  // namespace

const std::string* Tag::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '&') {
      out += text[i];
      continue;
    }
    const auto semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 10) {
      out += '&';
      continue;
    }
    const std::string_view entity = text.substr(i + 1, semi - i - 1);
    std::string replacement;
    if (!entity.empty() && entity[0] == '#') {
      std::uint32_t cp = 0;
      bool valid = entity.size() > 1;
      const bool hex = entity.size() > 1 && (entity[1] == 'x' || entity[1] == 'X');
      for (std::size_t k = hex ? 2 : 1; k < entity.size() && valid; ++k) {
        const auto c = static_cast<unsigned char>(entity[k]);
        if (hex && std::isxdigit(c)) {
          cp = cp * 16 + (std::isdigit(c) ? c - '0' : std::tolower(c) - 'a' + 10);
        } else if (!hex && std::isdigit(c)) {
          cp = cp * 10 + (c - '0');
        } else {
          valid = false;
        }
        if (cp > 0x10FFFF) valid = false;
      }
      if (hex && entity.size() == 2) valid = false;
      if (valid) append_utf8(replacement, cp);
    } else if (entity == "amp") {
      replacement = "&";
    } else if (entity == "lt") {
      replacement = "<";
    } else if (entity == "gt") {
      replacement = ">";
    } else if (entity == "quot") {
      replacement = "\"";
    } else if (entity == "apos") {
      replacement = "'";
    } else if (entity == "nbsp") {
      replacement = "\xC2\xA0";
    }
    if (replacement.empty()) {
      out += '&';
      continue;
    }
    out += replacement;
    i = semi;
  }
  return out;
}

void scan_tags(std::string_view doc, const std::function<void(const Tag&)>& visit) {
  std::size_t i = 0;
  while (i < doc.size()) {
    const auto lt = doc.find('<', i);
    if (lt == std::string_view::npos) return;
    i = lt + 1;
    if (doc.substr(lt, 4) == "<!--") {
      const auto end = doc.find("-->", lt + 4);
      if (end == std::string_view::npos) return;
      i = end + 3;
      continue;
    }
    if (i < doc.size() && (doc[i] == '!' || doc[i] == '?')) {
      const auto end = doc.find('>', i);
      if (end == std::string_view::npos) return;
      i = end + 1;
      continue;
    }

    Tag tag;
    if (i < doc.size() && doc[i] == '/') {
      tag.closing = true;
      ++i;
    }
    const auto name_start = i;
    while (i < doc.size() && is_name_char(doc[i])) ++i;
    if (i == name_start) continue;  // stray '<'
    tag.name = lower(doc.substr(name_start, i - name_start));

    // Attributes up to the closing '>'.
    bool terminated = false;
    while (i < doc.size()) {
      while (i < doc.size() && (is_space(doc[i]) || doc[i] == '/')) ++i;
      if (i >= doc.size()) break;
      if (doc[i] == '>') {
        terminated = true;
        ++i;
        break;
      }
      const auto key_start = i;
      while (i < doc.size() && !is_space(doc[i]) && doc[i] != '=' && doc[i] != '>' &&
             doc[i] != '/') {
        ++i;
      }
      std::string key = lower(doc.substr(key_start, i - key_start));
      while (i < doc.size() && is_space(doc[i])) ++i;
      std::string value;
      if (i < doc.size() && doc[i] == '=') {
        ++i;
        while (i < doc.size() && is_space(doc[i])) ++i;
        if (i < doc.size() && (doc[i] == '"' || doc[i] == '\'')) {
          const char quote = doc[i];
          const auto end = doc.find(quote, i + 1);
          if (end == std::string_view::npos) return;
          value = decode_entities(doc.substr(i + 1, end - i - 1));
          i = end + 1;
        } else {
          const auto value_start = i;
          while (i < doc.size() && !is_space(doc[i]) && doc[i] != '>') ++i;
          value = decode_entities(doc.substr(value_start, i - value_start));
        }
      }
      if (!key.empty()) tag.attributes.emplace_back(std::move(key), std::move(value));
    }
    if (!terminated) return;
    if (!tag.closing) visit(tag);

    if (!tag.closing && (tag.name == "script" || tag.name == "style")) {
      const auto end = ifind(doc, "</" + tag.name, i);
      if (end == std::string_view::npos) return;
      i = end;
    }
  }
}

}  // namespace onioncrawl::html
