#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "milplot/error.hpp"

namespace milplot::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Environment variable holding the default for --threads.
inline constexpr const char* kThreadsEnv = "MILPLOT_THREADS";

int exit_code(ErrorKind kind);

// Entry point of the `milplot` tool. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(std::span<const unsigned char> data);
std::string sha256_file(const std::filesystem::path& path);

// Column order of the comparison table written by `report`.
inline constexpr const char* kReportColumns =
    "model,attack,accuracy,macro_f1,auroc_macro,mean_loss,network_ms,end_to_end_ms,samples";

}  // namespace milplot::cli
