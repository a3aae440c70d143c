#include "moldkit/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <ostream>

#include "commands.hpp"
#include "moldkit/error.hpp"

namespace moldkit::cli {

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::vector<std::string> flag_names(const CLI::App& app) {
  std::vector<std::string> names;
  for (const auto* opt : app.get_options()) {
    for (const auto& n : opt->get_lnames()) names.push_back("--" + n);
  }
  return names;
}

// Reports leftover arguments as a usage error with a suggestion.
int reject_extras(const CLI::App& app, const std::vector<std::string>& extras,
                  const std::vector<std::string>& candidates, const std::string& what,
                  std::ostream& err) {
  const std::string word = extras.front();
  err << "error: unknown " << what << " '" << word << "'";
  const std::string hint = suggest(word.substr(0, word.find('=')), candidates);
  if (!hint.empty()) err << "; did you mean '" << hint << "'?";
  err << "\n" << "run '" << app.get_name() << " --help' for usage\n";
  return kUsage;
}

}  // namespace

std::string suggest(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::max<std::size_t>(3, word.size() / 3) + 1;
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gated multi-layer fusion detector over frozen ViT features", "moldkit"};
  app.require_subcommand(0, 1);
  app.allow_extras();
  GlobalOptions globals;
  std::function<void()> action;
  register_commands(app, globals, action, out);
  for (auto* sub : app.get_subcommands({})) sub->allow_extras();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  const auto selected = app.get_subcommands();
  if (selected.empty()) {
    if (!app.remaining().empty()) {
      std::vector<std::string> names;
      for (const auto* sub : app.get_subcommands({})) names.push_back(sub->get_name());
      return reject_extras(app, app.remaining(), names, "command", err);
    }
    err << app.help();
    return kUsage;
  }
  const CLI::App* sub = selected.front();
  if (!sub->remaining().empty()) {
    return reject_extras(app, sub->remaining(), flag_names(*sub), "argument", err);
  }

  try {
    action();
    return kOk;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericFault& e) {
    err << "numeric fault: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace moldkit::cli
