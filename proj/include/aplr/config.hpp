#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aplr {

enum class Scheme { imex, imex_s, imex_bug, imex_s_bug, imex_abug, imex_s_abug };

inline constexpr std::array<Scheme, 6> all_schemes{Scheme::imex,     Scheme::imex_s,    Scheme::imex_bug,
                                                   Scheme::imex_s_bug, Scheme::imex_abug, Scheme::imex_s_abug};

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::imex: return "IMEX";
    case Scheme::imex_s: return "IMEX-S";
    case Scheme::imex_bug: return "IMEX-BUG";
    case Scheme::imex_s_bug: return "IMEX-S-BUG";
    case Scheme::imex_abug: return "IMEX-aBUG";
    case Scheme::imex_s_abug: return "IMEX-S-aBUG";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : all_schemes)
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown scheme '" + std::string(name) +
                              "' (expected IMEX, IMEX-S, IMEX-BUG, IMEX-S-BUG, IMEX-aBUG or IMEX-S-aBUG)");
}

// Macroscopic density treated implicitly via the Schur complement.
inline bool is_schur(Scheme s) { return s == Scheme::imex_s || s == Scheme::imex_s_bug || s == Scheme::imex_s_abug; }
inline bool is_low_rank(Scheme s) { return s != Scheme::imex && s != Scheme::imex_s; }
inline bool is_adaptive(Scheme s) { return s == Scheme::imex_abug || s == Scheme::imex_s_abug; }

// theta of the energy functional that governs the scheme: 1 for IMEX, 0 for IMEX-S.
inline double default_theta(Scheme s) { return is_schur(s) ? 0.0 : 1.0; }

struct SolverConfig {
  double epsilon = 1.0;
  double dt = 1e-3;
  double theta = 1.0;
  Scheme scheme = Scheme::imex;
  // Schur system: relative residual, iteration cap (0 = 10 N_rho), and the
  // size below which a sparse direct factorization is used instead of CG.
  double linear_tolerance = 1e-12;
  long max_iterations = 0;
  long direct_threshold = 4096;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must lie in [0, 1]");
    if (!(linear_tolerance > 0.0)) throw std::invalid_argument("linear tolerance must be positive");
  }
};

}  // namespace aplr
