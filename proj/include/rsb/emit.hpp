#pragma once

#include <string>
#include <vector>

#include "rsb/potentials.hpp"
#include "rsb/sinkhorn.hpp"
#include "rsb/verify.hpp"

namespace rsb {

// Stable text emission: fixed column order, floats at 17 significant digits,
// so byte-identical reruns certify determinism.

void write_text_atomic(const std::string& path, const std::string& content);

std::string marginal_csv(const Marginal& m);
Marginal read_marginal_csv(const std::string& path, const Grid& grid, int regimes);

std::string convergence_csv(const ConvergenceReport& report);

// rows: regime, node coords, phi0, phihat0, phiT, phihatT (0 where a side of
// the support does not include the node)
std::string potentials_csv(const BoundaryPotentials& bp, const EndpointKernel& ek,
                           const Grid& grid);

std::string path_csv_header(int d);
void append_path_csv(std::string& out, int path_id, const SamplePath& path);

std::string marginals_by_time_csv(const std::vector<std::pair<double, Marginal>>& slices);

std::string residual_report_json(const std::vector<ResidualReport>& reports);

std::string killing_rate_csv(const std::vector<std::array<double, 3>>& rows);  // t, x, rate

std::uint64_t file_hash(const std::string& path);

}  // namespace rsb
