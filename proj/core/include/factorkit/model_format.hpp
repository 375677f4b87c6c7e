#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "factorkit/graph.hpp"

namespace factorkit {

// Line-oriented model description. Grammar (one statement per line, `#`
// starts a comment that runs to end of line):
//
//   model <name>
//   input <C>x<H>x<W>
//   conv <name> in=<src> k=<kh>x<kw> [s=<sh>x<sw>] [p=<ph>x<pw>] out=<C> [bias=<0|1>]
//   maxpool <name> in=<src> k=<kh>x<kw> [s=<sh>x<sw>] [p=<ph>x<pw>]
//   relu <name> in=<src>
//   concat <name> in=<a>,<b>,...
//   factor <name> {
//     ...layer statements...
//   }
//
// <src> is a layer name or @input. Defaults: s=1x1, p=0x0, bias=1. Layers
// declared before the first factor block form the stem; at most one concat may
// follow the factor blocks and becomes the trailing merge. Unknown keywords,
// unknown or repeated keys, and malformed values raise SpecError with the line
// number. Parsing checks syntax only; run validate() for structure.
GraphSpec parse_model(std::string_view text);
GraphSpec load_model(const std::filesystem::path& path);

// Canonical text: every key spelled out, stem then factors then trailing.
std::string export_model(const GraphSpec& graph);

}  // namespace factorkit
