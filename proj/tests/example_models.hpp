#pragma once

// The three shipped example models (and the anti-example) used across the
// test and acceptance suites. Mirrors configs/*.cfg.

#include "cbire/certify.hpp"
#include "cbire/model.hpp"

namespace cbire::examples {

// Diffusion-dominated model; also the certified reference example:
// quadratic competition, exponential branching jumps, two-atom factor law,
// constant-plus-affine catastrophe rate, mild environment.
inline ModelSpec diffusion_dominated() {
    ModelSpec m;
    m.alpha = 1.0;
    m.b = 0.1;
    m.sigma = 1.0;
    m.mu = JumpMeasure::exponential(0.5, 2.0);
    m.beta0 = 0.02;
    m.beta1 = 0.1;
    m.nu = JumpMeasure::two_sided_exponential(0.1, 3.0, 0.1, 2.0);
    m.r = ScalarFn::affine(0.5, 2e-4);
    m.r_lipschitz = 2e-4;
    m.r_inf = 0.5;
    m.q = CatastropheLaw::from_atoms({{0.3, 0.5}, {0.7, 0.5}});
    m.g = ScalarFn::power(0.05, 2.0);
    return ModelSpec::create(m);
}

inline CertifyOptions diffusion_certify_options() {
    CertifyOptions opt;
    opt.theta_V = 0.5;
    return opt;
}

// sigma = 0: the branching noise comes entirely from infinite-activity jumps.
inline ModelSpec infinite_activity() {
    ModelSpec m;
    m.alpha = 1.0;
    m.b = 0.1;
    m.sigma = 0.0;
    m.mu = JumpMeasure::power_law_cutoff(1.0, 1.0, 1.0);
    m.beta0 = 0.02;
    m.beta1 = 0.1;
    m.nu = JumpMeasure::two_sided_exponential(0.1, 3.0, 0.1, 2.0);
    m.r = ScalarFn::constant(0.3);
    m.r_lipschitz = 0.0;
    m.r_inf = 0.3;
    m.q = CatastropheLaw::from_atoms({{0.5, 1.0}});
    m.g = ScalarFn::power(0.05, 2.0);
    return ModelSpec::create(m);
}

inline CertifyOptions infinite_activity_certify_options() {
    CertifyOptions opt;
    opt.theta_V = 0.5;
    opt.c0 = 0.5;
    return opt;
}

// No competition at all: the state-dependent catastrophes carry the drift.
inline ModelSpec catastrophe_heavy() {
    ModelSpec m;
    m.alpha = 1.0;
    m.b = 0.05;
    m.sigma = 0.6;
    m.mu = JumpMeasure::exponential(0.3, 2.0);
    m.beta0 = 0.05;
    m.beta1 = 0.1;
    m.nu = JumpMeasure::two_sided_exponential(0.05, 3.0, 0.05, 2.0);
    m.r = ScalarFn::affine(3.0, 0.01);
    m.r_lipschitz = 0.01;
    m.r_inf = 3.0;
    m.q = CatastropheLaw::from_atoms({{0.2, 0.7}, {0.6, 0.3}});
    m.g = ScalarFn::zero();
    return ModelSpec::create(m);
}

inline CertifyOptions catastrophe_certify_options() {
    CertifyOptions opt;
    opt.theta_V = 0.8;
    return opt;
}

// beta0 - b = 1 with every stabilizer off: the Lyapunov condition fails.
inline ModelSpec anti_example() {
    ModelSpec m;
    m.alpha = 1.0;
    m.b = 0.0;
    m.sigma = 1.0;
    m.beta0 = 1.0;
    m.q = CatastropheLaw::dirac(1.0);
    return ModelSpec::create(m);
}

}  // namespace cbire::examples
