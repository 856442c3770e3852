#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include "naflab/analysis.hpp"
#include "naflab/errors.hpp"

namespace naflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 16-point Gauss-Legendre rule on [-1, 1], positive half.
constexpr double kGlNode[8] = {
    0.0950125098376374401853193, 0.2816035507792589132304605, 0.4580167776572273863424194,
    0.6178762444026437484466718, 0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
constexpr double kGlWeight[8] = {
    0.1894506104550684962853967, 0.1826034150449235888667637, 0.1691565193950025381893121,
    0.1495959888165767320815017, 0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};

double gauss16(const std::function<double(double)>& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double total = 0.0;
    for (int i = 0; i < 8; ++i) {
        const double dx = half * kGlNode[i];
        total += kGlWeight[i] * (f(mid + dx) + f(mid - dx));
    }
    return total * half;
}

double composite_gauss16(const std::function<double(double)>& f, double a, double b,
                         std::size_t panels) {
    double total = 0.0;
    const double width = (b - a) / static_cast<double>(panels);
    for (std::size_t i = 0; i < panels; ++i)
        total += gauss16(f, a + width * static_cast<double>(i),
                         a + width * static_cast<double>(i + 1));
    return total;
}

struct MaskedIntegral {
    double value = 0.0;
    double error = 0.0;
};

// Panel-doubling until the composite rule stabilizes; the last change is the
// reported error estimate.
MaskedIntegral adaptive_gauss16(const std::function<double(double)>& f, double a, double b,
                                std::size_t max_panels) {
    double prev = composite_gauss16(f, a, b, 1);
    double diff = kInf;
    for (std::size_t panels = 2; panels <= max_panels; panels *= 2) {
        const double cur = composite_gauss16(f, a, b, panels);
        diff = std::abs(cur - prev);
        prev = cur;
        if (diff <= std::max(1e-12, 1e-10 * std::abs(cur))) break;
    }
    return MaskedIntegral{prev, std::isfinite(diff) ? diff : 0.0};
}

// Integrates density * mask over [a, b]. The mask is assumed to flip
// finitely often; flips are located by an even scan plus bisection, and each
// accepted piece is integrated as a smooth function.
MaskedIntegral integrate_masked_1d(const std::function<double(double)>& density,
                                   const std::function<bool(double)>& mask, double a, double b,
                                   std::size_t scan, std::size_t max_panels) {
    if (!(b > a)) return {};
    std::vector<double> cuts;
    cuts.push_back(a);
    bool prev_mask = mask(a);
    for (std::size_t i = 1; i <= scan; ++i) {
        const double t = a + (b - a) * static_cast<double>(i) / static_cast<double>(scan);
        const bool cur_mask = mask(t);
        if (cur_mask != prev_mask) {
            double lo = a + (b - a) * static_cast<double>(i - 1) / static_cast<double>(scan);
            double hi = t;
            for (int iter = 0; iter < 80; ++iter) {
                const double midpt = 0.5 * (lo + hi);
                if (mask(midpt) == prev_mask)
                    lo = midpt;
                else
                    hi = midpt;
            }
            cuts.push_back(0.5 * (lo + hi));
            prev_mask = cur_mask;
        }
    }
    cuts.push_back(b);

    MaskedIntegral out;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i];
        const double hi = cuts[i + 1];
        if (!(hi > lo)) continue;
        if (!mask(0.5 * (lo + hi))) continue;
        const MaskedIntegral piece = adaptive_gauss16(density, lo, hi, max_panels);
        out.value += piece.value;
        out.error += piece.error;
    }
    return out;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Nested rule: the outer axis is integrated by panel doubling, each node
// evaluating a boundary-aware 1-D integral over the inner interval.
MaskedIntegral integrate_masked_2d(const std::function<double(double, double)>& density,
                                   const std::function<bool(double, double)>& mask, double lo2,
                                   double hi2,
                                   const std::function<std::optional<Interval>(double)>& chord,
                                   std::size_t scan, std::size_t max_panels) {
    double inner_error = 0.0;
    std::size_t inner_calls = 0;
    const auto outer = [&](double y2) {
        const std::optional<Interval> seg = chord(y2);
        if (!seg || !(seg->hi > seg->lo)) return 0.0;
        const MaskedIntegral inner = integrate_masked_1d(
            [&](double y1) { return density(y1, y2); }, [&](double y1) { return mask(y1, y2); },
            seg->lo, seg->hi, scan, max_panels);
        inner_error += inner.error;
        ++inner_calls;
        return inner.value;
    };
    MaskedIntegral out = adaptive_gauss16(outer, lo2, hi2, max_panels);
    if (inner_calls > 0)
        out.error += (hi2 - lo2) * inner_error / static_cast<double>(inner_calls);
    return out;
}

void accumulate_envelope(const Model& model, const Eigen::VectorXd& c, Eigen::VectorXd& lo,
                         Eigen::VectorXd& hi) {
    const auto widen = [&](const AffineGaussian& g) {
        const Eigen::VectorXd mean = g.mean(c);
        for (Eigen::Index d = 0; d < mean.size(); ++d) {
            const double sd = std::sqrt(std::max(g.cov()(d, d), 0.0));
            lo[d] = std::min(lo[d], mean[d] - 14.0 * sd);
            hi[d] = std::max(hi[d], mean[d] + 14.0 * sd);
        }
    };
    if (const auto* gmm = std::get_if<GaussianMixtureModel>(&model)) {
        for (const AffineGaussian& g : gmm->components()) widen(g);
    } else if (const auto* diff = std::get_if<LinearDiffusionModel>(&model)) {
        widen(diff->marginal());
    } else {
        throw UnsupportedFamily("envelope needs a continuous model");
    }
}

std::vector<Eigen::VectorXd> direction_grid(std::size_t dim, std::size_t resolution) {
    std::vector<Eigen::VectorXd> dirs;
    if (dim == 1) {
        dirs.push_back(Eigen::VectorXd::Constant(1, 1.0));
        dirs.push_back(Eigen::VectorXd::Constant(1, -1.0));
        return dirs;
    }
    dirs.reserve(resolution);
    for (std::size_t j = 0; j < resolution; ++j) {
        const double angle =
            2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(resolution);
        Eigen::VectorXd d(2);
        d << std::cos(angle), std::sin(angle);
        dirs.push_back(std::move(d));
    }
    return dirs;
}

}  // namespace

std::pair<double, double> ball_constants(std::size_t dim, double eps) {
    if (dim == 0 || dim > 3) throw UnsupportedDimension("ball constants cover dimensions 1-3");
    if (!(eps >= 0.0)) throw DomainError("ball radius must be non-negative");
    switch (dim) {
        case 1: return {2.0 * eps, eps * eps};
        case 2: return {std::numbers::pi * eps * eps,
                        (2.0 * std::numbers::pi / 3.0) * eps * eps * eps};
        default: return {(4.0 / 3.0) * std::numbers::pi * eps * eps * eps,
                         std::numbers::pi * eps * eps * eps * eps};
    }
}

Theorem2Report verify_theorem2(const ModelSuite& suite,
                               const std::vector<Prompt>& prompt_candidates,
                               const std::vector<ProtectionPolicy>& policies, double delta,
                               std::size_t resolution) {
    if (suite.family == Family::Tabular)
        throw UnsupportedFamily("lower-bound verification needs a continuous suite");
    if (suite.infringing.kind != InfringingSet::Kind::Ball)
        throw ShapeMismatch("lower-bound verification needs a ball-shaped infringing set");
    if (prompt_candidates.size() != policies.size())
        throw ShapeMismatch("one policy per prompt candidate");
    if (!(delta > 0.0)) throw DomainError("margin must be positive");
    if (resolution < 8) throw InvalidSpec("resolution must be at least 8");

    const auto dim = static_cast<std::size_t>(suite.target.value.size());
    if (dim > 2) throw UnsupportedDimension("quadrature covers 1-D and 2-D suites");
    const Eigen::VectorXd& y_c = suite.target.value;
    const double eps_c = suite.infringing.radius;

    Theorem2Report report;
    report.delta = delta;
    report.eps_c = eps_c;

    std::vector<std::size_t> retained;
    for (std::size_t i = 0; i < prompt_candidates.size(); ++i) {
        const double r = rho(suite, prompt_candidates[i], suite.target);
        if (r < policies[i].k_x - delta) retained.push_back(i);
    }
    if (retained.empty()) throw NoCandidateInXTilde("no prompt passes the margin filter");
    report.retained = retained.size();
    report.best_candidate = retained.front();

    double eta = kInf;
    for (const std::size_t i : retained)
        eta = std::min(eta, std::exp2(suite.log2_p(prompt_candidates[i], suite.target)));
    report.eta = eta;

    const std::vector<Eigen::VectorXd> dirs = direction_grid(dim, resolution);

    // Largest grid radius on which every retained prompt keeps the ratio
    // statistic strictly under its threshold.
    double eps_rho = 0.0;
    std::vector<double> radii;
    radii.reserve(resolution);
    for (std::size_t j = 1; j <= resolution; ++j)
        radii.push_back(eps_c * static_cast<double>(j) / static_cast<double>(resolution));
    for (const double r : radii) {
        bool ok = true;
        for (const std::size_t i : retained) {
            for (const Eigen::VectorXd& d : dirs) {
                const SamplePoint y = SamplePoint::continuous(y_c + r * d);
                if (!(rho(suite, prompt_candidates[i], y) < policies[i].k_x)) {
                    ok = false;
                    break;
                }
            }
            if (!ok) break;
        }
        if (!ok) break;
        eps_rho = r;
    }
    report.eps_rho = eps_rho;
    report.eps_p = eps_rho;
    const double eps = std::min(eps_rho, eps_c);
    report.eps = eps;

    // Grid supremum of the local density slope around the target, inflated
    // to guard against grid under-estimation.
    double alpha = 0.0;
    for (const double r : radii) {
        if (r > eps) break;
        for (const std::size_t i : retained) {
            const double p_center = std::exp2(suite.log2_p(prompt_candidates[i], suite.target));
            for (const Eigen::VectorXd& d : dirs) {
                const SamplePoint y = SamplePoint::continuous(y_c + r * d);
                const double p_y = std::exp2(suite.log2_p(prompt_candidates[i], y));
                alpha = std::max(alpha, std::abs(p_center - p_y) / r);
            }
        }
    }
    alpha *= 1.1;
    report.alpha = alpha;

    const auto [c1, c2] = ball_constants(dim == 0 ? 1 : dim, eps);
    report.c1 = c1;
    report.c2 = c2;
    report.bound = std::max(0.0, eta * c1 - alpha * c2);

    const std::size_t best = report.best_candidate;
    const Prompt& x = prompt_candidates[best];
    const double k = policies[best].k_x;
    const auto accept_point = [&](const SamplePoint& y) { return rho(suite, x, y) <= k; };

    Eigen::VectorXd lo = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), kInf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), -kInf);
    for (const Model& member : suite.cover) accumulate_envelope(member, x.context, lo, hi);

    const std::size_t scan = std::max<std::size_t>(resolution, 64);
    const std::size_t max_panels = 4096;
    MaskedIntegral numer;
    MaskedIntegral denom;
    if (dim == 1) {
        const auto density = [&](double y) {
            return std::exp2(suite.log2_p(x, SamplePoint::continuous(Eigen::VectorXd::Constant(1, y))));
        };
        const auto mask = [&](double y) {
            return accept_point(SamplePoint::continuous(Eigen::VectorXd::Constant(1, y)));
        };
        numer = integrate_masked_1d(density, mask, y_c[0] - eps_c, y_c[0] + eps_c, scan,
                                    max_panels);
        if (std::isinf(k))
            denom = MaskedIntegral{1.0, 0.0};
        else
            denom = integrate_masked_1d(density, mask, lo[0], hi[0], scan, max_panels);
    } else {
        const auto point = [](double y1, double y2) {
            Eigen::VectorXd v(2);
            v << y1, y2;
            return SamplePoint::continuous(std::move(v));
        };
        const auto density = [&](double y1, double y2) {
            return std::exp2(suite.log2_p(x, point(y1, y2)));
        };
        const auto mask = [&](double y1, double y2) { return accept_point(point(y1, y2)); };
        const auto ball_chord = [&](double y2) -> std::optional<Interval> {
            const double dy = y2 - y_c[1];
            const double rem = eps_c * eps_c - dy * dy;
            if (rem <= 0.0) return std::nullopt;
            const double w = std::sqrt(rem);
            return Interval{y_c[0] - w, y_c[0] + w};
        };
        numer = integrate_masked_2d(density, mask, y_c[1] - eps_c, y_c[1] + eps_c, ball_chord,
                                    scan, max_panels);
        if (std::isinf(k)) {
            denom = MaskedIntegral{1.0, 0.0};
        } else {
            const auto full_chord = [&](double) -> std::optional<Interval> {
                return Interval{lo[0], hi[0]};
            };
            denom = integrate_masked_2d(density, mask, lo[1], hi[1], full_chord, scan,
                                        max_panels);
        }
    }

    if (!(denom.value > 1e-300)) throw EmptyAcceptanceRegion("filter keeps no density mass");
    report.lhs = numer.value / denom.value;
    report.quadrature_error =
        numer.error / denom.value + report.lhs * denom.error / denom.value;
    report.holds = report.lhs >= report.bound - 1e-9;
    return report;
}

}  // namespace naflab
