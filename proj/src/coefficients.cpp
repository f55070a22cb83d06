#include "kolstack/coefficients.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

namespace kolstack {

namespace {

double param_or(const std::map<std::string, double>& params, const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

VectorXd random_point(const Grid& grid, std::mt19937_64& rng) {
    VectorXd x(grid.n_axes());
    for (int a = 0; a < grid.n_axes(); ++a) {
        std::uniform_real_distribution<double> dist(grid.lower(a), grid.upper(a));
        x[a] = dist(rng);
    }
    return x;
}

}  // namespace

void validate_coefficients(const CoefficientSet& coeffs, const Grid& grid, int n_samples,
                           unsigned seed) {
    if (coeffs.n_subsystems != grid.n_subsystems() ||
        coeffs.d_per_subsystem != grid.d_per_subsystem())
        throw ConfigError("coefficients: chain shape (n, d) does not match the grid");
    if (!(coeffs.lambda_min > 0.0))
        throw ConfigError("coefficients: lambda_min must be positive");
    if (static_cast<int>(coeffs.drift.size()) != coeffs.n_subsystems)
        throw ConfigError("coefficients: need one drift block per subsystem");

    std::mt19937_64 rng(seed);
    const double T = grid.horizon();
    for (int s = 0; s < n_samples; ++s) {
        const double t = (s % 2 == 0) ? 0.0 : T * 0.5 * (1.0 + double(s) / n_samples);
        const VectorXd x = random_point(grid, rng);

        const Eigen::MatrixXd a = coeffs.diffusion(t, x);
        const int d = coeffs.d_per_subsystem;
        if (a.rows() != d || a.cols() != d)
            throw ConfigError("coefficients: diffusion must be d x d");
        if (!a.allFinite()) throw ConfigError("coefficients: diffusion has non-finite entries");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
        if (es.eigenvalues().minCoeff() < coeffs.lambda_min - 1e-12) {
            std::ostringstream os;
            os << "coefficients: least eigenvalue of a(t,x) = " << es.eigenvalues().minCoeff()
               << " falls below the declared bound " << coeffs.lambda_min;
            throw ConfigError(os.str());
        }

        const Eigen::MatrixXd sg = coeffs.sigma(t, x);
        if (sg.rows() != d) throw ConfigError("coefficients: sigma must have d rows");
        if (((sg * sg.transpose()) - a).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + a.norm()))
            throw ConfigError("coefficients: a != sigma sigma^T at a sampled point");

        // Chain structure: f_j must not react to coordinates of blocks < j-1.
        for (int block = 1; block < coeffs.n_subsystems; ++block) {
            const int first = coeffs.first_allowed_axis(block);
            const VectorXd base = coeffs.drift[block](t, x);
            if (base.size() != d) throw ConfigError("coefficients: drift blocks must be R^d valued");
            VectorXd xp = x;
            for (int a2 = 0; a2 < first; ++a2) {
                std::uniform_real_distribution<double> shift(-1.0, 1.0);
                xp[a2] = x[a2] + shift(rng) + 0.5;
            }
            if (first > 0) {
                const VectorXd perturbed = coeffs.drift[block](t, xp);
                if ((perturbed - base).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + base.norm())) {
                    std::ostringstream os;
                    os << "coefficients: drift block " << block + 1
                       << " depends on a coordinate excluded by the chain structure";
                    throw ConfigError(os.str());
                }
            }
        }
    }
}

CoefficientSet make_coefficients(const std::string& name,
                                 const std::map<std::string, double>& params) {
    CoefficientSet c;
    c.name = name;
    const double a0 = param_or(params, "diffusion", 1.0);
    if (!(a0 > 0.0)) throw ConfigError("coefficients: diffusion parameter must be positive");
    c.lambda_min = a0;
    c.time_dependent = false;
    c.d_per_subsystem = 1;
    c.diffusion = [a0](double, const VectorXd&) {
        return Eigen::MatrixXd::Constant(1, 1, a0);
    };
    const double s0 = std::sqrt(a0);
    c.sigma = [s0](double, const VectorXd&) {
        return Eigen::MatrixXd::Constant(1, 1, s0);
    };

    auto zero_drift = [](double, const VectorXd&) { return VectorXd::Zero(1); };

    if (name == "kolmogorov") {
        const double coupling = param_or(params, "coupling", 1.0);
        c.n_subsystems = 2;
        c.drift = {zero_drift,
                   [coupling](double, const VectorXd& x) {
                       return VectorXd::Constant(1, coupling * x[0]);
                   }};
    } else if (name == "constant") {
        c.n_subsystems = 2;
        c.drift = {zero_drift, zero_drift};
    } else if (name == "rotation") {
        const double omega = param_or(params, "omega", 1.0);
        c.n_subsystems = 2;
        c.drift = {[omega](double, const VectorXd& x) { return VectorXd::Constant(1, -omega * x[1]); },
                   [omega](double, const VectorXd& x) { return VectorXd::Constant(1, omega * x[0]); }};
    } else if (name == "chain3") {
        const double coupling = param_or(params, "coupling", 1.0);
        c.n_subsystems = 3;
        c.drift = {zero_drift,
                   [coupling](double, const VectorXd& x) {
                       return VectorXd::Constant(1, coupling * x[0]);
                   },
                   [coupling](double, const VectorXd& x) {
                       return VectorXd::Constant(1, coupling * x[1]);
                   }};
    } else {
        throw ConfigError("coefficients: unknown registry name '" + name + "'");
    }
    return c;
}

std::vector<std::string> coefficient_registry_names() {
    return {"kolmogorov", "constant", "rotation", "chain3"};
}

}  // namespace kolstack
