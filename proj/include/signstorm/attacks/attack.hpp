#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <vector>

#include "signstorm/model.hpp"
#include "signstorm/rng.hpp"
#include "signstorm/tensor.hpp"

namespace signstorm {

enum class AttackKind { LBFGS, FGSM, CW, BIM, PGD, ONEPIXEL, UAP };
enum class NormKind { L0, L2, Linf };

inline const char* attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::LBFGS: return "L-BFGS";
        case AttackKind::FGSM: return "FGSM";
        case AttackKind::CW: return "C&W";
        case AttackKind::BIM: return "BIM";
        case AttackKind::PGD: return "PGD";
        case AttackKind::ONEPIXEL: return "One-Pixel";
        case AttackKind::UAP: return "UAP";
    }
    return "?";
}

inline AttackKind parse_attack_kind(const std::string& s) {
    if (s == "LBFGS" || s == "L-BFGS" || s == "lbfgs") return AttackKind::LBFGS;
    if (s == "FGSM" || s == "fgsm") return AttackKind::FGSM;
    if (s == "CW" || s == "C&W" || s == "cw") return AttackKind::CW;
    if (s == "BIM" || s == "bim") return AttackKind::BIM;
    if (s == "PGD" || s == "pgd") return AttackKind::PGD;
    if (s == "ONEPIXEL" || s == "One-Pixel" || s == "onepixel" || s == "OPA") return AttackKind::ONEPIXEL;
    if (s == "UAP" || s == "uap") return AttackKind::UAP;
    throw Error("unknown attack \"" + s + "\"; valid kinds: LBFGS, FGSM, CW, BIM, PGD, ONEPIXEL, UAP");
}

inline NormKind default_norm(AttackKind k) {
    switch (k) {
        case AttackKind::ONEPIXEL: return NormKind::L0;
        case AttackKind::CW:
        case AttackKind::LBFGS: return NormKind::L2;
        default: return NormKind::Linf;
    }
}

// Margin value and gradient used by the optimization-based attacks.
// Untargeted (toward any other class): margin = z[y] - max_{j != y} z[j].
// Targeted (toward class_ref):         margin = max_{j != t} z[j] - z[t].
// Either way the attack drives the margin negative.
struct MarginGrad {
    std::vector<double> logits;
    double margin = 0.0;
    Tensor grad; // d margin / d image
};

// Anything the attacks can target: a classifier exposing probabilities, the
// cross-entropy input gradient, and the logit-margin input gradient.
template <class T>
concept AttackTarget = requires(const T& t, const Tensor& img, int label, bool targeted) {
    { t.num_classes() } -> std::convertible_to<int>;
    { t.probs(img) } -> std::convertible_to<std::vector<double>>;
    { t.ce_loss_grad(img, label) } -> std::convertible_to<LossGrad>;
    { t.margin_grad(img, label, targeted) } -> std::convertible_to<MarginGrad>;
};

struct AttackConfig {
    AttackKind kind = AttackKind::FGSM;
    double epsilon = 8.0 / 255.0; // Linf budget where applicable
    double alpha = 0.0;           // step size; 0 means epsilon / 10
    int iterations = 40;
    bool targeted = false;
    std::optional<int> target_label;
    NormKind norm = NormKind::Linf;
    uint64_t seed = 0;
    double reject_threshold = 0.25;

    // PGD
    bool random_start = true;
    // C&W
    double kappa = 0.0;
    int binary_search_steps = 6;
    int cw_iterations = 200;
    double cw_lr = 0.01;
    double c_min = 1e-3;
    double c_max = 1e2;
    // L-BFGS
    int memory = 10;
    std::vector<double> c_grid; // empty means 8 log-spaced points in [1e-2, 1e2]
    // One-Pixel differential evolution
    int popsize = 60;
    int de_iterations = 75;
    double de_f = 0.5;
    double de_cr = 0.9;

    static AttackConfig for_kind(AttackKind k) {
        AttackConfig c;
        c.kind = k;
        c.norm = default_norm(k);
        if (k == AttackKind::LBFGS) {
            c.targeted = true;
            c.iterations = 50;
        }
        return c;
    }

    double step_size() const { return alpha > 0.0 ? alpha : epsilon / 10.0; }

    std::vector<double> lbfgs_c_grid() const {
        if (!c_grid.empty()) return c_grid;
        std::vector<double> grid;
        for (int i = 0; i < 8; ++i)
            grid.push_back(std::exp(std::log(1e-2) + (std::log(1e2) - std::log(1e-2)) * i / 7.0));
        return grid;
    }

    void validate() const {
        if (epsilon < 0.0) throw Error(std::string(attack_name(kind)) + ": epsilon must be >= 0");
        if (epsilon > 1.0) throw Error(std::string(attack_name(kind)) + ": epsilon must be <= 1");
        if (targeted && !target_label)
            throw Error(std::string(attack_name(kind)) + ": targeted attack requires a target label");
        if (norm != default_norm(kind))
            throw Error(std::string(attack_name(kind)) + ": wrong norm for this attack kind");
        if (iterations < 1) throw Error(std::string(attack_name(kind)) + ": iterations must be >= 1");
        if (kind == AttackKind::LBFGS && !targeted)
            throw Error("L-BFGS: this attack is targeted only");
        if (kind == AttackKind::ONEPIXEL && popsize < 4)
            throw Error("One-Pixel: population size must be >= 4 (DE mutation needs 3 distinct partners)");
    }
};

struct AttackResult {
    Tensor adversarial_image;
    Tensor perturbation; // adversarial - original; clip(original + perturbation) == adversarial
    Prediction before;
    Prediction after;
    bool success = false;
    double l0 = 0, l2 = 0, linf = 0;
    int iterations_used = 0;
};

// Untargeted success means the label changed or recognition was destroyed
// (the report's "NA" outcome); targeted success means the target label is
// predicted and recognized.
inline bool attack_success(const AttackConfig& cfg, const Prediction& before, const Prediction& after) {
    if (cfg.targeted) return after.label == *cfg.target_label && after.recognized;
    return after.label != before.label || !after.recognized;
}

namespace detail {

// Settle (adversarial, perturbation) so that clip(original + perturbation)
// reproduces the adversarial image bit for bit; one pass suffices except in
// pathological rounding cases, hence the short fixpoint loop.
inline void settle_perturbation(const Tensor& original, Tensor& adv, Tensor& pert) {
    for (int round = 0; round < 8; ++round) {
        bool stable = true;
        for (int64_t i = 0; i < original.size(); ++i) {
            pert[i] = adv[i] - original[i];
            const double re = std::min(1.0, std::max(0.0, original[i] + pert[i]));
            if (re != adv[i]) {
                adv[i] = re;
                stable = false;
            }
        }
        if (stable) return;
    }
    throw Error("attack: perturbation failed to settle (non-finite input?)");
}

} // namespace detail

template <AttackTarget T>
AttackResult finish_attack(const T& target, const AttackConfig& cfg, const Tensor& original,
                           Tensor adv_candidate, const Prediction& before, int iterations_used) {
    AttackResult r;
    r.adversarial_image = clamp01(std::move(adv_candidate));
    r.perturbation = Tensor(original.shape());
    detail::settle_perturbation(original, r.adversarial_image, r.perturbation);
    r.before = before;
    r.after = prediction_from_probs(target.probs(r.adversarial_image), cfg.reject_threshold);
    r.success = attack_success(cfg, r.before, r.after);
    r.l0 = norm_l0(r.perturbation);
    r.l2 = norm_l2(r.perturbation);
    r.linf = norm_linf(r.perturbation);
    r.iterations_used = iterations_used;
    return r;
}

} // namespace signstorm
