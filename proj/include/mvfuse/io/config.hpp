// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_IO_CONFIG_HPP
#define MVFUSE_IO_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvfuse/core.hpp"

namespace mvfuse::io {

/// Engine configuration. Every field mirrors a documented config key; the
/// defaults are the reference values used throughout.
struct EngineConfig {
  double r_max = 8.0;           // key: R_max
  double swell_k = 1.0;         // key: swell_k
  int knn_k = 50;               // key: knn_k
  std::vector<std::pair<int, int>> crops = {{64, 64},   {128, 64},  {128, 128}, {256, 128},
                                            {256, 256}, {512, 256}, {512, 512}, {1024, 512}};
  int margin = 8;               // key: margin
  double budget = 0.0;          // key: budget; 0 = derive 4x full-resolution at plan time
  double lambda = 2.0;          // key: lambda
  int c = 32;                   // key: C
  int k = 4;                    // key: K
  int m = 32;                   // key: M
  std::uint64_t seed = 0;       // key: seed
};

/// Parses a `key = value` config file. Unknown keys are rejected so typos
/// surface instead of silently keeping defaults. '#' starts a comment.
inline EngineConfig read_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoFailure, "cannot open '" + path + "'");

  EngineConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // Trim.
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    const auto eq = line.find('=');
    const std::string where = " at line " + std::to_string(line_no);
    require(eq != std::string::npos, ErrorCode::ConfigError, "missing '='" + where);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    key = strip(key);
    value = strip(value);
    require(!key.empty() && !value.empty(), ErrorCode::ConfigError, "empty key or value" + where);

    auto as_double = [&](double& slot) {
      std::istringstream vs(value);
      vs >> slot;
      require(!vs.fail(), ErrorCode::ConfigError, "bad numeric value for " + key + where);
    };
    auto as_int = [&](int& slot) {
      std::istringstream vs(value);
      vs >> slot;
      require(!vs.fail(), ErrorCode::ConfigError, "bad integer value for " + key + where);
    };

    if (key == "R_max") as_double(cfg.r_max);
    else if (key == "swell_k") as_double(cfg.swell_k);
    else if (key == "knn_k") as_int(cfg.knn_k);
    else if (key == "margin") as_int(cfg.margin);
    else if (key == "budget") as_double(cfg.budget);
    else if (key == "lambda") as_double(cfg.lambda);
    else if (key == "C") as_int(cfg.c);
    else if (key == "K") as_int(cfg.k);
    else if (key == "M") as_int(cfg.m);
    else if (key == "seed") {
      std::istringstream vs(value);
      vs >> cfg.seed;
      require(!vs.fail(), ErrorCode::ConfigError, "bad seed value" + where);
    } else if (key == "crops") {
      // Comma-separated WxH list, e.g. "64x64,128x64".
      cfg.crops.clear();
      std::istringstream vs(value);
      std::string item;
      while (std::getline(vs, item, ',')) {
        const auto x = item.find('x');
        require(x != std::string::npos, ErrorCode::ConfigError, "crop wants WxH" + where);
        int w = 0, h = 0;
        std::istringstream ws(item.substr(0, x)), hs(item.substr(x + 1));
        ws >> w;
        hs >> h;
        require(!ws.fail() && !hs.fail() && w >= 1 && h >= 1, ErrorCode::ConfigError,
                "bad crop size '" + item + "'" + where);
        cfg.crops.emplace_back(w, h);
      }
      require(!cfg.crops.empty(), ErrorCode::ConfigError, "empty crop list" + where);
    } else {
      fail(ErrorCode::ConfigError, "unknown config key '" + key + "'" + where);
    }
  }
  require(cfg.r_max > 0 && cfg.swell_k >= 0 && cfg.knn_k >= 1 && cfg.lambda >= 0 &&
              cfg.margin >= 0 && cfg.c >= 1 && cfg.k >= 1 && cfg.m >= 1,
          ErrorCode::ConfigError, "config values out of range");
  return cfg;
}

}  // namespace mvfuse::io

#endif  // MVFUSE_IO_CONFIG_HPP
