#pragma once

#include <iosfwd>

namespace smart_tree {

/// Entry point of the `smart-tree` command line. Returns 0 on success, 1 on a
/// domain error (one-line diagnostic on `err`) and 2 on flag misuse.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace smart_tree
