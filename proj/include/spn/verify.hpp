#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spn/network.hpp"
#include "spn/state_space.hpp"

namespace spn {

struct VerifyOptions {
  double tol = 1e-6;           // gain and relative value gaps
  double solver_tol = 1e-9;    // RVI span tolerance
  double residual_tol = 1e-8;  // Bellman residuals and the per-step gain identity
  int sim_steps = 1000;        // rollout length of the passing-last simulation check
  std::uint64_t seed = 0;
  int workers = 1;
  std::size_t state_limit = 2'000'000;
};

struct CertificateCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  // Reported only; does not affect the result.
  bool informational = false;
};

struct Certificate {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int num_states = 0;
  std::vector<CertificateCheck> checks;

  bool passed() const;
  // One "check" record per line, then "result PASSED" or "result FAILED".
  std::string text() const;
};

// Enumerates the closure of the initial state, builds kernels and runs every
// check.
Certificate verify_theorems(const Instance& inst, const VerifyOptions& opts = {});

// Same checks on prebuilt (possibly cached) kernels.
Certificate verify_theorems(const Instance& inst, const StateIndex& idx, const KernelSet& kernels,
                            const VerifyOptions& opts = {});

}  // namespace spn
