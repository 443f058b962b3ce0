#pragma once

#include <stdexcept>
#include <string>

namespace onioncrawl {

// Process exit codes of the crawl command.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kNoStartingLink = 3,
  kStorage = 4,
};

class CrawlError : public std::runtime_error {
 public:
  CrawlError(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public CrawlError {
 public:
  explicit ConfigError(const std::string& what)
      : CrawlError(ExitCode::kConfig, what) {}
};

class StartingLinkError : public CrawlError {
 public:
  explicit StartingLinkError(const std::string& what)
      : CrawlError(ExitCode::kNoStartingLink, what) {}
};

class StorageError : public CrawlError {
 public:
  explicit StorageError(const std::string& what)
      : CrawlError(ExitCode::kStorage, what) {}
};

}  // namespace onioncrawl
