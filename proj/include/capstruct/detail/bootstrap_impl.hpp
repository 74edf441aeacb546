#pragma once

#include "capstruct/parallel.hpp"

#include <string>

namespace capstruct {

template <typename FitDraw>
BootstrapResult bootstrap_replicates(std::size_t replicates, std::uint64_t seed, Eigen::Index p, FitDraw&& fit_draw) {
    if (replicates < 2) throw ConfigError("bootstrap needs at least 2 replicates");
    const std::size_t cap = 10 * replicates;
    std::vector<Vector> accepted;
    accepted.reserve(replicates);
    std::size_t next_draw = 0;
    while (accepted.size() < replicates && next_draw < cap) {
        const std::size_t batch = std::min(replicates - accepted.size(), cap - next_draw);
        std::vector<std::optional<Vector>> results(batch);
        parallel_for(batch, [&](std::size_t k) {
            try {
                results[k] = fit_draw(derive_seed(seed, next_draw + k));
            } catch (const EstimationError&) {
                results[k].reset();
            }
        });
        for (auto& r : results) {
            if (r && accepted.size() < replicates) accepted.push_back(std::move(*r));
        }
        next_draw += batch;
    }
    if (accepted.size() < replicates) {
        throw EstimationError("bootstrap: only " + std::to_string(accepted.size()) + " of " +
                              std::to_string(replicates) + " replicates succeeded in " + std::to_string(cap) + " draws");
    }
    Matrix draws(static_cast<Eigen::Index>(replicates), p);
    for (std::size_t r = 0; r < replicates; ++r) draws.row(static_cast<Eigen::Index>(r)) = accepted[r].transpose();
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Matrix centred = draws.rowwise() - mean;
    BootstrapResult out;
    out.covariance = (centred.transpose() * centred) / static_cast<double>(replicates - 1);
    out.standard_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.replicates = replicates;
    out.draws = next_draw;
    return out;
}

}  // namespace capstruct
