// SPDX-License-Identifier: Apache-2.0
#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "layerwise/cli.hpp"

int main(int argc, char** argv) {
    // Activations are large and reallocated every step; keep freed blocks in
    // the heap instead of returning them to the kernel each time.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    std::vector<std::string> args(argv + 1, argv + argc);
    return layerwise::run_cli(args, std::cout, std::cerr);
}
