#pragma once

#include <chrono>
#include <string>

namespace onioncrawl {

using SystemClock = std::chrono::system_clock;

// UTC, millisecond precision: 2024-05-01T12:00:00.123Z
std::string rfc3339(SystemClock::time_point t);

}  // namespace onioncrawl
