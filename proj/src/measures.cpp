#include "cbire/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

namespace cbire {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTableLo = 1e-9;     // nodes never approach 0 closer than this
constexpr double kMinTruncation = 1e-8;  // smallest supported truncation level

void validate_atoms(const std::vector<Atom>& atoms, double lo, double hi) {
    for (const auto& a : atoms) {
        if (!(a.mass > 0.0)) throw DomainError("atom mass must be strictly positive");
        if (!(a.location >= lo && a.location <= hi) || !std::isfinite(a.location))
            throw DomainError("atom location outside measure support");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// factories

JumpMeasure JumpMeasure::zero() {
    JumpMeasure m;
    m.family_ = "zero";
    m.support_lo_ = 0.0;
    m.support_hi_ = 0.0;
    return m;
}

JumpMeasure JumpMeasure::exponential(double c, double beta) {
    if (!(c > 0.0) || !(beta > 0.0)) throw DomainError("exponential: need c > 0, beta > 0");
    JumpMeasure m;
    m.family_ = "exponential";
    m.support_lo_ = 0.0;
    m.support_hi_ = kInf;
    m.density_ = [c, beta](double z) { return z > 0.0 ? c * std::exp(-beta * z) : 0.0; };
    return m;
}

JumpMeasure JumpMeasure::power_law_cutoff(double c, double a, double beta) {
    if (!(c > 0.0) || !(beta > 0.0)) throw DomainError("power_law_cutoff: need c > 0, beta > 0");
    if (!(a > -1.0) || !(a < 2.0)) throw DomainError("power_law_cutoff: need -1 < a < 2");
    JumpMeasure m;
    m.family_ = "power_law_cutoff";
    m.support_lo_ = 0.0;
    m.support_hi_ = kInf;
    m.density_ = [c, a, beta](double z) {
        return z > 0.0 ? c * std::pow(z, -1.0 - a) * std::exp(-beta * z) : 0.0;
    };
    m.singular_at_zero_ = a > -1.0;  // density itself blows up at 0 for a > -1
    return m;
}

JumpMeasure JumpMeasure::two_sided_exponential(double c_plus, double beta_plus,
                                               double c_minus, double beta_minus) {
    if (!(c_plus >= 0.0) || !(c_minus >= 0.0) || !(beta_plus > 0.0) || !(beta_minus > 0.0))
        throw DomainError("two_sided_exponential: need c >= 0, beta > 0");
    JumpMeasure m;
    m.family_ = "two_sided_exponential";
    m.support_lo_ = -kInf;
    m.support_hi_ = kInf;
    m.density_ = [=](double z) {
        return z >= 0.0 ? c_plus * std::exp(-beta_plus * z) : c_minus * std::exp(beta_minus * z);
    };
    return m;
}

JumpMeasure JumpMeasure::two_sided_power_law_cutoff(double c_plus, double a_plus, double beta_plus,
                                                    double c_minus, double a_minus,
                                                    double beta_minus) {
    if (!(c_plus >= 0.0) || !(c_minus >= 0.0) || !(beta_plus > 0.0) || !(beta_minus > 0.0))
        throw DomainError("two_sided_power_law_cutoff: need c >= 0, beta > 0");
    if (!(a_plus < 2.0) || !(a_minus < 2.0))
        throw DomainError("two_sided_power_law_cutoff: need a < 2");
    JumpMeasure m;
    m.family_ = "two_sided_power_law_cutoff";
    m.support_lo_ = -kInf;
    m.support_hi_ = kInf;
    m.density_ = [=](double z) {
        if (z == 0.0) return 0.0;
        const double az = std::abs(z);
        return z > 0.0 ? c_plus * std::pow(az, -1.0 - a_plus) * std::exp(-beta_plus * az)
                       : c_minus * std::pow(az, -1.0 - a_minus) * std::exp(-beta_minus * az);
    };
    m.singular_at_zero_ = true;
    return m;
}

JumpMeasure JumpMeasure::from_atoms(std::vector<Atom> atoms) {
    JumpMeasure m;
    m.family_ = "atoms";
    bool all_positive = true;
    for (const auto& a : atoms)
        if (a.location <= 0.0) all_positive = false;
    m.support_lo_ = all_positive ? 0.0 : -kInf;
    m.support_hi_ = kInf;
    validate_atoms(atoms, m.support_lo_, m.support_hi_);
    m.atoms_ = std::move(atoms);
    return m;
}

JumpMeasure JumpMeasure::with_atoms(std::vector<Atom> atoms) const {
    JumpMeasure m = *this;
    validate_atoms(atoms, m.support_lo_, m.support_hi_);
    m.atoms_ = std::move(atoms);
    m.table_mutex_ = std::make_shared<std::mutex>();
    m.table_slot_ = std::make_shared<std::shared_ptr<const CdfTable>>();
    if (m.family_.find("+atoms") == std::string::npos && !m.atoms_.empty())
        m.family_ += "+atoms";
    return m;
}

// ---------------------------------------------------------------------------
// density integration

double JumpMeasure::density(double z) const {
    if (!density_ || z < support_lo_ || z > support_hi_) return 0.0;
    return density_(z);
}

namespace {

struct Piece {
    double a, b;
};

}  // namespace

double JumpMeasure::density_integral(const std::function<double(double)>& f, double a, double b,
                                     const QuadOptions& opt) const {
    if (!density_) return 0.0;
    a = std::max(a, support_lo_);
    b = std::min(b, support_hi_);
    if (!(a < b)) return 0.0;

    // Evaluate f only where the density is positive: mapped tails otherwise
    // produce inf * 0 artefacts.
    const JumpMeasure* self = this;
    auto g = [&f, self](double z) {
        const double m = self->density(z);
        // Skip overflowed density values: they occur only at z so small that
        // the true contribution is below quadrature tolerance for admissible
        // integrands.
        if (!(m > 0.0) || !std::isfinite(m)) return 0.0;
        return f(z) * m;
    };

    // Split at -1, 0, 1 and use a log substitution on pieces abutting 0, where
    // power-law families are singular.
    std::vector<double> cuts = {a};
    for (double c : {-1.0, 0.0, 1.0})
        if (c > a && c < b) cuts.push_back(c);
    cuts.push_back(b);

    double total = 0.0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double p = cuts[i];
        const double q = cuts[i + 1];
        const bool near_zero_right = p >= 0.0 && (p == 0.0 || (singular_at_zero_ && p < 1e-3));
        const bool near_zero_left = q <= 0.0 && (q == 0.0 || (singular_at_zero_ && q > -1e-3));
        if (near_zero_right && q > 0.0) {
            // z = e^u, u in (log p, log q)
            auto h = [&g](double u) {
                const double z = std::exp(u);
                return g(z) * z;
            };
            const double ulo = p == 0.0 ? -kInf : std::log(p);
            total += integrate_or_throw(h, ulo, std::log(q), opt, "density integral near 0+");
        } else if (near_zero_left && p < 0.0) {
            // z = -e^u, u in (log(-q), log(-p)) traversed in +u direction
            auto h = [&g](double u) {
                const double z = std::exp(u);
                return g(-z) * z;
            };
            const double ulo = q == 0.0 ? -kInf : std::log(-q);
            total += integrate_or_throw(h, ulo, std::log(-p), opt, "density integral near 0-");
        } else {
            total += integrate_or_throw(g, p, q, opt, "density integral");
        }
    }
    return total;
}

double JumpMeasure::integral(const std::function<double(double)>& f, double a, double b,
                             const QuadOptions& opt) const {
    double total = density_integral(f, a, b, opt);
    for (const auto& atom : atoms_)
        if (atom.location >= a && atom.location <= b) total += f(atom.location) * atom.mass;
    return total;
}

double JumpMeasure::truncated_mass(double a, double b, const QuadOptions& opt) const {
    if (!(a <= b)) return 0.0;
    return integral([](double) { return 1.0; }, a, b, opt);
}

double JumpMeasure::density_total_mass() const {
    if (!density_) return 0.0;
    if (singular_at_zero_) return kInf;
    return density_integral([](double) { return 1.0; }, support_lo_, support_hi_);
}

// ---------------------------------------------------------------------------
// sampling

struct JumpMeasure::CdfTable {
    std::vector<double> z;     // panel boundaries, ascending
    std::vector<double> cum;   // cum[i] = density mass over (z[0], z[i])
    std::vector<double> dens;  // density at boundaries
    double total() const { return cum.back(); }

    // Linear-density model inside a panel, rescaled so that the panel mass
    // matches the quadrature value exactly.
    double partial(int i, double t) const {
        const double z0 = z[i], z1 = z[i + 1];
        const double panel = cum[i + 1] - cum[i];
        if (panel <= 0.0 || t <= z0) return 0.0;
        if (t >= z1) return panel;
        const double h = z1 - z0;
        const double m0 = dens[i], m1 = dens[i + 1];
        const double lin_total = 0.5 * (m0 + m1) * h;
        if (lin_total <= 0.0) return panel * (t - z0) / h;
        const double s = t - z0;
        const double lin_part = m0 * s + 0.5 * (m1 - m0) * s * s / h;
        return panel * lin_part / lin_total;
    }

    double invert(int i, double target) const {
        const double z0 = z[i], z1 = z[i + 1];
        const double panel = cum[i + 1] - cum[i];
        const double h = z1 - z0;
        if (panel <= 0.0) return 0.5 * (z0 + z1);
        const double m0 = dens[i], m1 = dens[i + 1];
        const double lin_total = 0.5 * (m0 + m1) * h;
        if (lin_total <= 0.0) return z0 + h * target / panel;
        const double p = target / panel * lin_total;
        const double k = (m1 - m0) / h;
        double s;
        if (std::abs(k) * h < 1e-12 * std::max(m0, m1)) {
            s = p / std::max(m0, 1e-300);
        } else {
            const double disc = std::max(0.0, m0 * m0 + 2.0 * k * p);
            s = (std::sqrt(disc) - m0) / k;
        }
        return std::min(z1, std::max(z0, z0 + s));
    }

    double cdf(double t) const {
        if (t <= z.front()) return 0.0;
        if (t >= z.back()) return total();
        const auto it = std::upper_bound(z.begin(), z.end(), t);
        const int i = static_cast<int>(it - z.begin()) - 1;
        return cum[i] + partial(i, t);
    }

    double quantile(double c) const {
        c = std::min(std::max(c, 0.0), total());
        const auto it = std::upper_bound(cum.begin(), cum.end(), c);
        int i = static_cast<int>(it - cum.begin()) - 1;
        i = std::min(std::max(i, 0), static_cast<int>(z.size()) - 2);
        return invert(i, c - cum[i]);
    }
};

std::shared_ptr<const JumpMeasure::CdfTable> JumpMeasure::sampler_table() const {
    std::lock_guard<std::mutex> lock(*table_mutex_);
    if (!*table_slot_) {
        auto tbl = std::make_shared<CdfTable>();
        if (!density_) {
            *table_slot_ = tbl;
            return *table_slot_;
        }
        const QuadOptions panel_opt{1e-14, 1e-12, 16};

        auto tail_hi = [&](double from) {
            double ref = density_integral([](double) { return 1.0; }, from, kInf,
                                          QuadOptions{1e-12, 1e-9, 4000});
            double t = std::max(2.0 * from, 1.0);
            while (t < 1e12) {
                const double tail =
                    density_integral([](double) { return 1.0; }, t, kInf, QuadOptions{1e-13, 1e-9, 4000});
                if (tail < 1e-13 * (ref + 1e-12)) break;
                t *= 2.0;
            }
            return t;
        };

        std::vector<double> nodes;
        const int kPanelsPerSide = 4096;
        if (support_hi_ > 0.0) {
            const double lo = std::max(support_lo_ <= 0.0 ? kTableLo : support_lo_, kTableLo);
            const double hi = std::isinf(support_hi_) ? tail_hi(std::max(lo, 0.5)) : support_hi_;
            const double ratio = std::log(hi / lo) / kPanelsPerSide;
            for (int i = 0; i <= kPanelsPerSide; ++i) nodes.push_back(lo * std::exp(ratio * i));
        }
        if (support_lo_ < 0.0) {
            // Mirror of the positive layout.
            auto neg_tail = [&]() {
                double ref = density_integral([](double) { return 1.0; }, -kInf, -0.5,
                                              QuadOptions{1e-12, 1e-9, 4000});
                double t = 1.0;
                while (t < 1e12) {
                    const double tail = density_integral([](double) { return 1.0; }, -kInf, -t,
                                                         QuadOptions{1e-13, 1e-9, 4000});
                    if (tail < 1e-13 * (ref + 1e-12)) break;
                    t *= 2.0;
                }
                return t;
            };
            const double hi = std::isinf(support_lo_) ? neg_tail() : -support_lo_;
            const double ratio = std::log(hi / kTableLo) / kPanelsPerSide;
            std::vector<double> neg;
            for (int i = 0; i <= kPanelsPerSide; ++i) neg.push_back(-kTableLo * std::exp(ratio * i));
            std::reverse(neg.begin(), neg.end());
            neg.insert(neg.end(), nodes.begin(), nodes.end());
            nodes = std::move(neg);
        }

        tbl->z = nodes;
        tbl->dens.resize(nodes.size());
        tbl->cum.resize(nodes.size());
        for (size_t i = 0; i < nodes.size(); ++i) tbl->dens[i] = density(nodes[i]);
        tbl->cum[0] = 0.0;
        for (size_t i = 0; i + 1 < nodes.size(); ++i) {
            double mass = 0.0;
            const double z0 = nodes[i], z1 = nodes[i + 1];
            if (z0 < 0.0 && z1 > 0.0) {
                // straddles the excluded neighbourhood of 0
                mass = singular_at_zero_ ? 0.0
                                         : integrate([this](double z) { return density(z); }, z0, z1,
                                                     panel_opt)
                                               .value;
            } else {
                mass = integrate([this](double z) { return density(z); }, z0, z1, panel_opt).value;
            }
            tbl->cum[i + 1] = tbl->cum[i] + std::max(0.0, mass);
        }
        *table_slot_ = tbl;
    }
    return *table_slot_;
}

double JumpMeasure::sample_restricted(double a, double b, Rng& rng) const {
    bool dummy;
    return sample_restricted_tagged(a, b, rng, &dummy);
}

double JumpMeasure::sample_restricted_tagged(double a, double b, Rng& rng,
                                             bool* from_atom) const {
    const auto table = sampler_table();
    *from_atom = false;
    double atom_mass = 0.0;
    for (const auto& atom : atoms_)
        if (atom.location >= a && atom.location <= b) atom_mass += atom.mass;

    double clo = 0.0, chi = 0.0;
    const CdfTable* tbl = table.get();
    if (density_ && !tbl->z.empty()) {
        const double lo = std::max(a, tbl->z.front());
        const double hi = std::min(b, tbl->z.back());
        if (singular_at_zero_) {
            // truncation levels below the table floor are not supported
            if (a >= 0.0 && a < kMinTruncation && support_lo_ >= 0.0)
                throw DomainError("sample_restricted: truncation below 1e-8 on a singular density");
            if (b <= 0.0 && b > -kMinTruncation) throw DomainError("sample_restricted: truncation below 1e-8 on a singular density");
            if (a < 0.0 && b > 0.0 && support_lo_ < 0.0)
                throw DomainError("sample_restricted: region must exclude a neighbourhood of 0 for singular densities");
        }
        if (lo < hi) {
            clo = tbl->cdf(lo);
            chi = tbl->cdf(hi);
        }
    }
    const double density_mass = std::max(0.0, chi - clo);
    const double total = atom_mass + density_mass;
    if (!(total > 0.0)) throw DomainError("sample_restricted: zero-mass region");

    double u = rng.uniform01() * total;
    if (u < atom_mass) {
        for (const auto& atom : atoms_) {
            if (atom.location < a || atom.location > b) continue;
            u -= atom.mass;
            if (u <= 0.0) {
                *from_atom = true;
                return atom.location;
            }
        }
        *from_atom = true;
        return atoms_.back().location;
    }
    const double target = clo + (u - atom_mass);
    return tbl->quantile(target);
}

// ---------------------------------------------------------------------------
// overlap and thinning ratio

double JumpMeasure::overlap_mass(double x, const QuadOptions& opt) const {
    if (!density_) return 0.0;
    if (x == 0.0) return density_total_mass();
    return overlap_integral(x, [](double) { return 1.0; }, opt);
}

double JumpMeasure::overlap_integral(double x, const std::function<double(double)>& g,
                                     const QuadOptions& opt) const {
    if (!density_) return 0.0;
    if (x == 0.0) throw DomainError("overlap_integral: x must be nonzero");

    const double lo = std::max(support_lo_, support_lo_ + x);
    const double hi = std::min(support_hi_, support_hi_ + x);
    if (!(lo < hi)) return 0.0;
    const auto& dens = density_;
    const double slo = support_lo_, shi = support_hi_;
    auto both = [&dens, &g, x, slo, shi](double z) {
        const double zs = z - x;
        const double m1 = (z >= slo && z <= shi) ? dens(z) : 0.0;
        const double m2 = (zs >= slo && zs <= shi) ? dens(zs) : 0.0;
        const double mm = std::min(m1, m2);
        if (!(mm > 0.0) || !std::isfinite(mm)) return 0.0;
        return g(z) * mm;
    };
    // Split at the shifted origin so the kinked integrand stays piecewise smooth.
    double total = 0.0;
    std::vector<double> cuts = {lo};
    for (double c : {0.0, x, std::abs(x), 1.0, 1.0 + x})
        if (c > lo && c < hi) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(hi);
    for (size_t i = 0; i + 1 < cuts.size(); ++i)
        total += integrate_or_throw(both, cuts[i], cuts[i + 1], opt, "overlap integral");
    return total;
}

double JumpMeasure::rho(double x, double z) const {
    if (x == 0.0) return 1.0;
    if (!density_) return 0.0;  // mu_x == 0 convention for atom-only measures
    const double m = density(z);
    if (!(m > 0.0)) throw DomainError("rho: density vanishes at z with x != 0");
    const double shifted = density(z - x);
    const double r = std::min(m, shifted) / m;
    return std::min(1.0, std::max(0.0, r));
}

// ---------------------------------------------------------------------------
// tail refinement probes and admissibility

JumpMeasure::TailCheck JumpMeasure::refine_lower(const std::function<double(double)>& f,
                                                 double b) const {
    TailCheck out;
    if (!density_) return out;
    std::vector<double> vals;
    const QuadOptions opt{1e-12, 1e-9, 4000};
    for (int k = 1; k <= 11; ++k) {
        const double eps = std::pow(10.0, -k);
        if (eps >= b) continue;
        QuadResult r;
        try {
            vals.push_back(density_integral(f, eps, b, opt));
        } catch (const NumericError&) {
            out.diverges = true;
            return out;
        }
    }
    if (vals.empty()) return out;
    out.value = vals.back();
    if (vals.size() >= 4) {
        const double d1 = vals[vals.size() - 3] - vals[vals.size() - 4];
        const double d2 = vals[vals.size() - 2] - vals[vals.size() - 3];
        const double d3 = vals[vals.size() - 1] - vals[vals.size() - 2];
        const double scale = std::max(1.0, std::abs(out.value));
        if (d3 > 1e-9 * scale) {
            const double r1 = d2 > 0.0 ? d3 / d2 : 0.0;
            const double r2 = d1 > 0.0 ? d2 / d1 : 0.0;
            if (std::sqrt(std::max(r1, 0.0) * std::max(r2, 0.0)) > 0.9) out.diverges = true;
        }
        if (std::abs(out.value) > 1e12) out.diverges = true;
    }
    return out;
}

JumpMeasure::TailCheck JumpMeasure::refine_upper(const std::function<double(double)>& f,
                                                 double a) const {
    TailCheck out;
    if (!density_) return out;
    std::vector<double> vals;
    const QuadOptions opt{1e-12, 1e-9, 4000};
    double t = std::max(2.0 * std::abs(a), 2.0);
    for (int k = 0; k < 40; ++k) {
        try {
            vals.push_back(density_integral(f, a, t, opt));
        } catch (const NumericError&) {
            out.diverges = true;
            return out;
        }
        if (vals.size() >= 2) {
            const double d = vals.back() - vals[vals.size() - 2];
            if (std::abs(d) < 1e-12 * std::max(1.0, std::abs(vals.back()))) break;
        }
        if (std::abs(vals.back()) > 1e12) {
            out.diverges = true;
            out.value = vals.back();
            return out;
        }
        t *= 2.0;
    }
    out.value = vals.back();
    if (vals.size() >= 3) {
        const double d2 = vals[vals.size() - 1] - vals[vals.size() - 2];
        const double d1 = vals[vals.size() - 2] - vals[vals.size() - 3];
        if (d2 > 1e-10 * std::max(1.0, std::abs(out.value)) && d1 > 0.0 && d2 / d1 > 0.9)
            out.diverges = true;
    }
    return out;
}

void JumpMeasure::check_branching_admissible() const {
    if (is_zero()) return;
    if (support_lo_ < 0.0)
        throw DomainError("branching measure must be supported on (0, infinity)");
    for (const auto& atom : atoms_)
        if (!(atom.location > 0.0))
            throw DomainError("branching measure atoms must have positive locations");
    if (density_) {
        auto zz = [](double z) { return std::min(z, z * z); };
        TailCheck low = refine_lower(zz, 1.0);
        if (low.diverges)
            throw DomainError(
                "branching measure inadmissible: integral of (z ^ z^2) diverges near 0");
        TailCheck up = refine_upper(zz, 1.0);
        if (up.diverges)
            throw DomainError(
                "branching measure inadmissible: integral of (z ^ z^2) diverges at infinity");
    }
}

void JumpMeasure::check_environment_admissible() const {
    if (is_zero()) return;
    if (density_) {
        auto z2 = [](double z) { return z * z; };
        if (refine_lower(z2, 1.0).diverges)
            throw DomainError("environment measure inadmissible: integral z^2 diverges near 0+");
        // negative side toward 0: mirror through density(-.)
        {
            std::vector<double> vals;
            const QuadOptions opt{1e-12, 1e-9, 4000};
            bool bad = false;
            for (int k = 1; k <= 11; ++k) {
                const double eps = std::pow(10.0, -k);
                try {
                    vals.push_back(density_integral(z2, -1.0, -eps, opt));
                } catch (const NumericError&) {
                    bad = true;
                    break;
                }
            }
            if (!bad && vals.size() >= 3) {
                const double d2 = vals[vals.size() - 1] - vals[vals.size() - 2];
                const double d1 = vals[vals.size() - 2] - vals[vals.size() - 3];
                if (d2 > 1e-9 * std::max(1.0, vals.back()) && d1 > 0.0 && d2 / d1 > 0.9) bad = true;
            }
            if (bad)
                throw DomainError(
                    "environment measure inadmissible: integral z^2 diverges near 0-");
        }
        auto expm1_pos = [](double z) { return std::expm1(z); };
        if (refine_upper(expm1_pos, 1.0).diverges)
            throw DomainError(
                "environment measure inadmissible: integral |e^z - 1| diverges at +infinity "
                "(right tail must decay faster than e^{-z})");
        // left tail: |e^z - 1| <= 1, so only the measure's own mass matters
        const double left_mass =
            density_integral([](double) { return 1.0; }, -kInf, -1.0, QuadOptions{1e-10, 1e-8, 4000});
        if (!std::isfinite(left_mass) || left_mass > 1e12)
            throw DomainError("environment measure inadmissible: infinite mass on (-inf, -1]");
    }
    for (const auto& atom : atoms_) {
        if (!std::isfinite(atom.location))
            throw DomainError("environment atom at infinity");
    }
}

// ---------------------------------------------------------------------------
// compensated jump integrals

double compensated_branch_integral(const JumpMeasure& mu,
                                   const std::function<double(double)>& bracket,
                                   double curvature, double z_star, const QuadOptions& opt) {
    if (mu.is_zero()) return 0.0;
    double total = mu.integral(bracket, z_star, std::numeric_limits<double>::infinity(), opt);
    if (mu.has_density() && curvature != 0.0) {
        total += 0.5 * curvature *
                 mu.density_integral([](double z) { return z * z; }, 0.0, z_star, opt);
    }
    for (const auto& atom : mu.atoms())
        if (atom.location > 0.0 && atom.location < z_star)
            total += bracket(atom.location) * atom.mass;
    return total;
}

double compensated_env_integral(const JumpMeasure& nu,
                                const std::function<double(double)>& bracket, double curvature,
                                double w_star, const QuadOptions& opt) {
    if (nu.is_zero()) return 0.0;
    constexpr double inf = std::numeric_limits<double>::infinity();
    double total = nu.integral(bracket, -inf, -w_star, opt) + nu.integral(bracket, w_star, inf, opt);
    if (nu.has_density() && curvature != 0.0) {
        total += 0.5 * curvature *
                 nu.density_integral(
                     [](double z) {
                         const double w = std::expm1(z);
                         return w * w;
                     },
                     -w_star, w_star, opt);
    }
    for (const auto& atom : nu.atoms())
        if (std::abs(atom.location) < w_star && atom.location != 0.0)
            total += bracket(atom.location) * atom.mass;
    return total;
}

// ---------------------------------------------------------------------------
// CatastropheLaw

CatastropheLaw CatastropheLaw::from_atoms(std::vector<Atom> atoms) {
    CatastropheLaw q;
    q.atoms_ = std::move(atoms);
    q.finalize();
    return q;
}

CatastropheLaw CatastropheLaw::uniform() {
    CatastropheLaw q;
    q.atoms_.clear();
    q.density_ = [](double z) { return (z >= 0.0 && z <= 1.0) ? 1.0 : 0.0; };
    q.density_mass_ = 1.0;
    q.finalize();
    return q;
}

void CatastropheLaw::finalize() {
    validate();
    mean_one_minus_z_ = integral([](double z) { return 1.0 - z; });
}

void CatastropheLaw::validate() const {
    double total = density_mass_;
    for (const auto& a : atoms_) {
        if (!(a.mass > 0.0)) throw DomainError("catastrophe law: atom mass must be positive");
        if (!(a.location >= 0.0 && a.location <= 1.0))
            throw DomainError("catastrophe law: support must lie in [0, 1]");
        total += a.mass;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw DomainError("catastrophe law: total mass must equal 1 (got " + std::to_string(total) +
                          ")");
}

double CatastropheLaw::integral(const std::function<double(double)>& f, double a, double b,
                                const QuadOptions& opt) const {
    double total = 0.0;
    if (density_) {
        const double lo = std::max(a, 0.0), hi = std::min(b, 1.0);
        if (lo < hi)
            total += integrate_or_throw([&](double z) { return f(z) * density_(z); }, lo, hi, opt,
                                        "catastrophe law integral");
    }
    for (const auto& atom : atoms_)
        if (atom.location >= a && atom.location <= b) total += f(atom.location) * atom.mass;
    return total;
}

double CatastropheLaw::mass(double a, double b) const {
    return integral([](double) { return 1.0; }, a, b);
}

double CatastropheLaw::moment_z_pow_minus_one(double theta) const {
    return integral([theta](double z) { return std::pow(z, theta) - 1.0; });
}

double CatastropheLaw::sample(Rng& rng) const {
    double u = rng.uniform01();
    for (const auto& atom : atoms_) {
        u -= atom.mass;
        if (u <= 0.0) return atom.location;
    }
    // remaining mass is the (uniform) density part
    if (density_ && density_mass_ > 0.0) return rng.uniform01();
    return atoms_.empty() ? 0.0 : atoms_.back().location;
}

}  // namespace cbire
