#pragma once

// Drives the command-line front end in-process.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace testutil {

struct CliResult {
    int rc = 0;
    std::string out;
    std::string err;

    // Run directory printed on stdout (last non-empty line).
    std::filesystem::path dir() const;
};

CliResult cli(std::vector<std::string> args);

// Relative path -> bytes for every regular file under dir.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir);

// Small highway with a roadside unit, channel/beacon/sweep configs. Returns the
// scenario config path.
std::filesystem::path write_inputs(const std::filesystem::path& dir);

// gen-scenario, simulate, analyze, fit-z, validate and sweep chained under
// `out`, every command with the given worker count. Returns the run dirs in
// that order; empty when a command fails.
std::vector<std::filesystem::path> pipeline(const std::filesystem::path& inputs, const std::filesystem::path& out,
                                            int workers, std::string* failure = nullptr);

}  // namespace testutil
