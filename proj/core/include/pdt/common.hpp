#pragma once

#include <functional>
#include <string>

namespace pdt {

// Forward-pass mode. Train uses per-batch statistics in normalization layers
// and updates their running estimates; Eval uses the stored running
// estimates and never mutates state.
enum class Mode { Train, Eval };

// Library-level warning sink. The default writes "warning: ..." to stderr;
// tests and embedders may swap it out. Never used for errors, which are
// reported by throwing.
using WarnFn = std::function<void(const std::string&)>;
WarnFn& warning_handler();
void warn(const std::string& message);

}  // namespace pdt
