#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace onioncrawl::html {

struct Tag {
  std::string name;  // lowercase
  std::vector<std::pair<std::string, std::string>> attributes;  // names lowercase, values decoded
  bool closing = false;

  const std::string* attribute(std::string_view name) const;
};

// Tolerant start/end tag scanner. Comments, doctypes and the bodies of
// script/style elements are skipped; unterminated markup ends the scan.
void scan_tags(std::string_view document, const std::function<void(const Tag&)>& visit);

// Decodes the named entities common in attribute values plus numeric
// references.
std::string decode_entities(std::string_view text);

}  // namespace onioncrawl::html
