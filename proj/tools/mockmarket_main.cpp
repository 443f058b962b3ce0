// Serves a generated marketplace until interrupted. Prints the base URL and
// a ready-to-use market metadata document on stdout.

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mockmarket/mockmarket.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"local marketplace for crawler testing"};
  std::string spec_path;
  int pages = 100;
  int branching = 3;
  std::uint64_t seed = 1;
  int port = 0;
  app.add_option("--port", port, "listen port on 127.0.0.1 (0 picks one)");
  app.add_option("--spec", spec_path, "site spec JSON (overrides the flags below)");
  app.add_option("--pages", pages, "page count");
  app.add_option("--branching", branching, "links per page");
  app.add_option("--seed", seed, "graph seed");
  CLI11_PARSE(app, argc, argv);

  mockmarket::SiteSpec spec;
  try {
    if (!spec_path.empty()) {
      std::ifstream in(spec_path);
      if (!in) {
        std::cerr << "cannot open " << spec_path << "\n";
        return 2;
      }
      spec = mockmarket::parse_site_spec(nlohmann::json::parse(in));
    } else {
      spec.page_count = pages;
      spec.branching = branching;
      spec.seed = seed;
    }
  } catch (const std::exception& e) {
    std::cerr << "bad site spec: " << e.what() << "\n";
    return 2;
  }

  std::unique_ptr<mockmarket::MockMarket> served;
  try {
    served = std::make_unique<mockmarket::MockMarket>(spec, port);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  auto& market = *served;
  nlohmann::ordered_json meta;
  meta["market_name"] = "mockmarket";
  meta["starting_links"] = {market.url(0)};
  meta["expected_home_marker"] = mockmarket::kHomeMarker;
  if (spec.login_required) {
    meta["credentials"] = {{"username", spec.username},
                           {"password", spec.password},
                           {"login_path", "/login"},
                           {"username_field", "username"},
                           {"password_field", "password"}};
  }
  std::cout << "serving " << market.base_url() << "\n" << meta.dump(2) << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  market.stop();
  return 0;
}
