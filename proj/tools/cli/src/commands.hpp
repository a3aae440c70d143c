#pragma once

#include <functional>
#include <iosfwd>

#include "context.hpp"

namespace CLI {
class App;
}

namespace moldkit::cli {

// Adds every subcommand to `app`. When a subcommand is selected its parse
// callback stores the work to run in `action`.
void register_commands(CLI::App& app, GlobalOptions& globals, std::function<void()>& action,
                       std::ostream& out);

}  // namespace moldkit::cli
