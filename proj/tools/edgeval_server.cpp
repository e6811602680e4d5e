// Copyright 2026 The edgeval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

#include "edgeval/server.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgeval orchestrator server"};
  std::optional<std::string> config_path, bind, storage_root, static_root;
  std::optional<std::size_t> queue_bound;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--bind", bind, "host:port (overrides config and environment)");
  app.add_option("--storage-root", storage_root, "session store directory");
  app.add_option("--queue-bound", queue_bound, "per-session render queue bound");
  app.add_option("--static-root", static_root, "directory served at /");
  app.add_flag("-v,--verbose", verbose, "debug logging");
  CLI11_PARSE(app, argc, argv);
  if (verbose) spdlog::set_level(spdlog::level::debug);

  try {
    auto config = edgeval::server::load_config(config_path ? std::optional<std::filesystem::path>(*config_path)
                                                           : std::nullopt);
    if (bind) config.bind_address = *bind;
    if (storage_root) config.storage_root = *storage_root;
    if (queue_bound) config.queue_bound = *queue_bound;
    if (static_root) config.static_root = *static_root;

    edgeval::server::ServerContext ctx(config);
    edgeval::server::Server server(ctx);
    const auto port = server.start();
    std::cout << "edgeval_server listening on port " << port << ", storage " << config.storage_root.string()
              << std::endl;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));

    spdlog::info("shutting down");
    server.stop();
    ctx.shutdown();
  } catch (const edgeval::Error& ex) {
    std::cerr << "error: " << edgeval::to_string(ex.code()) << ": " << ex.what() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
