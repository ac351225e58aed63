#pragma once

// Benchmarking statistics: F(n) = A p^n + B decay fits and the RB / XEB gate
// fidelities derived from them, with first-order uncertainty propagation.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace fluxcal {

struct DecayFit {
    double A = 0.0;
    double p = 1.0;        ///< depolarization parameter, 0 < p <= 1
    double B = 0.0;
    double sigma_p = 0.0;  ///< standard error of p from the fit covariance
    bool degenerate = false;  ///< p not identifiable (flat data)
    bool derived = false;     ///< combined from other fits; A and B are not meaningful
};

enum class Scheme { RB, XEB };

struct FidelityEstimate {
    double fidelity = 1.0;
    double sigma = 0.0;
    Scheme scheme = Scheme::RB;
    int dimension = 4;
};

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

/// Least-squares F(n) = A p^n + B; sigma_p = sqrt of the covariance diagonal,
/// scaled by the residual variance as scipy's curve_fit does by default.
DecayFit fit_decay(const std::vector<int>& ns, const std::vector<double>& fidelities);

/// F = 1 - (1 - p_gate/p_ref) (D-1)/D.
FidelityEstimate rb_fidelity(const DecayFit& gate, const DecayFit& ref, int dimension = 4);

/// Depolarization of two parallel single-qubit layers: (p1 + p2 + 3 p1 p2) / 5.
DecayFit xeb_parallel_combine(const DecayFit& q1, const DecayFit& q2);

/// F = 1 - (1 - p_gate/p_sq) (D-1)/D.
FidelityEstimate xeb_fidelity(const DecayFit& gate, const DecayFit& sq, int dimension = 4);

/// Decay CSV, header `n,fidelity`.
struct DecayData {
    std::vector<int> ns;
    std::vector<double> fidelities;
};
DecayData read_decay_csv(const std::filesystem::path& path);
std::string decay_to_csv(const DecayData& data);

nlohmann::json to_json(const DecayFit& fit);
nlohmann::json to_json(const FidelityEstimate& est);

}  // namespace fluxcal
