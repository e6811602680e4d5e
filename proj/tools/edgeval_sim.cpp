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

#include <iostream>

#include "edgeval/error.hpp"
#include "edgeval/simulator.hpp"

namespace sim = edgeval::simulator;

int main(int argc, char** argv) {
  CLI::App app{"edgeval capture simulator"};
  app.require_subcommand(1);

  sim::StreamOptions so;
  std::string root;
  std::optional<std::string> protocol, stream_as;
  auto* stream = app.add_subcommand("stream", "play a stored session to a server");
  stream->add_option("--root", root, "session store root")->required();
  stream->add_option("--session", so.session_id, "session id")->required();
  stream->add_option("--url", so.url, "ws://host:port")->required();
  stream->add_option("--fps", so.fps, "frames per second (0 = unpaced)")->capture_default_str();
  stream->add_flag("--loop", so.loop, "repeat the session");
  stream->add_option("--max-loops", so.max_loops, "stop after this many passes with --loop");
  stream->add_option("--protocol", protocol, "experiment protocol id");
  stream->add_option("--as", stream_as, "session id announced to the server");

  std::string scene_name = "ramp", res = "64x48", out;
  int frames = 10;
  std::optional<std::string> session;
  auto* generate = app.add_subcommand("generate", "write a synthetic session");
  generate->add_option("--scene", scene_name, "ramp | step | orbiting-box")->capture_default_str();
  generate->add_option("--frames", frames, "frame count")->capture_default_str();
  generate->add_option("--res", res, "WxH")->capture_default_str();
  generate->add_option("--out", out, "session store root")->required();
  generate->add_option("--session", session, "session id (defaults to the scene name)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*stream) {
      so.root = root;
      so.protocol_id = protocol;
      so.stream_as = stream_as;
      const auto stats = sim::stream_session(so);
      std::cout << "frames_sent " << stats.frames_sent << "\nbytes_sent " << stats.bytes_sent
                << "\nmean_interframe_ms " << stats.mean_interframe_ms << "\nacks_received " << stats.acks_received
                << '\n';
    } else {
      const auto scene = sim::parse_scene(scene_name);
      if (!scene) {
        std::cerr << "error: unknown scene '" << scene_name << "'\n";
        return 2;
      }
      std::cout << sim::generate_synthetic(out, *scene, frames, sim::parse_resolution(res), session) << '\n';
    }
  } catch (const edgeval::Error& ex) {
    std::cerr << "error: " << edgeval::to_string(ex.code()) << ": " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
