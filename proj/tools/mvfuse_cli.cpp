// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>

int main() {
  std::puts("mvfuse: subcommands pending");
  return 0;
}
