#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "aucal/experiment.hpp"
#include "aucal/synth.hpp"

namespace aucal::cli {

// Exit codes: 0 success, 1 usage or validation error, 2 I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitIo = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct DemoOptions {
  std::uint64_t seed = 7;
  std::size_t n = 20000;
  std::size_t seeds = 5;
  std::size_t epochs = 40;
  std::filesystem::path out_dir;
  unsigned threads = 1;
};

// Configuration of the mitigation comparison used by `demo`: a lambda = 0
// baseline against lambda = 10 with mean-reduced triplet loss, trained on
// biased labels and scored on fair labels.
synth::SynthConfig demo_synth_config(std::uint64_t seed, std::size_t n);
experiment::CompareOptions demo_compare_options(std::uint64_t seed, std::size_t seeds,
                                                std::size_t epochs);

// synth -> audit -> relabel -> audit -> train (lambda 0 vs 10) -> eval.
// Writes every artifact under out_dir and a summary to `out`.
void run_demo(const DemoOptions& options, std::ostream& out);

}  // namespace aucal::cli
