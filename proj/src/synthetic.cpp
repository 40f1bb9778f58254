#include "wsco/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "wsco/check.hpp"

namespace wsco {

std::vector<double> WorldConfig::prior() const {
    if (!class_prior.empty()) return class_prior;
    return std::vector<double>(num_classes, 1.0 / num_classes);
}

void WorldConfig::validate() const {
    check_config(num_classes >= 2, "world: need at least 2 classes");
    check_config(d_feat >= 8 && d_feat % 4 == 0, "world: d_feat must be >= 8 and divisible by 4");
    check_config(n_source >= 1 && n_target >= 1, "world: scenario counts must be >= 1");
    check_config(min_instances >= 1 && max_instances >= min_instances,
                 "world: bad instance count range");
    check_config(noise_scale >= 0.0 && sigma_weak >= 0.0, "world: negative noise scale");
    check_config(p_erase >= 0.0 && p_erase <= 1.0, "world: p_erase outside [0,1]");
    for (std::size_t l = 1; l < mask_frac.size(); ++l)
        check_config(mask_frac[l] > mask_frac[l - 1], "world: mask fractions must increase");
    check_config(mask_frac.back() <= 0.75, "world: top mask fraction exceeds irrelevant pool");
    if (!class_prior.empty()) {
        check_config(static_cast<int>(class_prior.size()) == num_classes,
                     "world: class_prior length mismatch");
        double s = 0.0;
        for (double p : class_prior) {
            check_config(p >= 0.0, "world: negative prior");
            s += p;
        }
        check_config(std::abs(s - 1.0) < 1e-6, "world: prior not normalized");
    }
    check_config(proposals_per_gt >= 1 && background_proposals >= 0, "world: bad proposal counts");
}

int MaskOperator::erased_count() const {
    int n = 0;
    for (double k : keep)
        if (k == 0.0) ++n;
    return n;
}

bool MaskOperator::erases_relevant() const {
    for (int i = 0; i < relevant_width; ++i)
        if (keep[static_cast<std::size_t>(i)] == 0.0) return true;
    return false;
}

ClassBank make_class_bank(std::uint64_t seed, const WorldConfig& world) {
    world.validate();
    ClassBank bank;
    bank.relevant_width = world.relevant_width();
    Rng rng = derive_rng(seed, "class-bank");
    // shared objectness block, identical across classes
    const std::vector<double> common = rng.normal_vec(world.d_feat - bank.relevant_width);
    for (int k = 0; k < world.num_classes; ++k) {
        std::vector<double> sig = rng.normal_vec(bank.relevant_width, 1.6);
        sig.insert(sig.end(), common.begin(), common.end());
        bank.signatures.push_back(std::move(sig));
    }
    return bank;
}

namespace {

BBox random_box(Rng& rng) {
    const double w = rng.uniform(0.12, 0.30);
    const double h = rng.uniform(0.12, 0.30);
    const double x = rng.uniform(0.0, 1.0 - w);
    const double y = rng.uniform(0.0, 1.0 - h);
    return {x, y, x + w, y + h};
}

BBox clamp_box(BBox b) {
    b.x1 = std::clamp(b.x1, 0.0, 1.0);
    b.y1 = std::clamp(b.y1, 0.0, 1.0);
    b.x2 = std::clamp(b.x2, 0.0, 1.0);
    b.y2 = std::clamp(b.y2, 0.0, 1.0);
    if (b.x2 - b.x1 < 1e-3) b.x2 = std::min(1.0, b.x1 + 1e-3);
    if (b.y2 - b.y1 < 1e-3) b.y2 = std::min(1.0, b.y1 + 1e-3);
    return b;
}

Scenario make_scenario(int image_id, const ClassBank& bank, const std::vector<double>& shift,
                       const WorldConfig& world, Rng& rng) {
    Scenario s;
    s.image_id = image_id;
    s.noise_scale = world.noise_scale;
    s.shift = shift;
    const auto prior = world.prior();
    const int n = rng.uniform_int(world.min_instances, world.max_instances);
    for (int i = 0; i < n; ++i) {
        ScenarioInstance inst;
        inst.class_id = rng.categorical(prior);
        inst.signature = bank.signatures[static_cast<std::size_t>(inst.class_id)];
        for (int j = 0; j < world.d_feat; ++j)
            inst.signature[static_cast<std::size_t>(j)] +=
                shift[static_cast<std::size_t>(j)] + world.noise_scale * rng.normal();
        // keep instances mostly disjoint so matching stays unambiguous
        BBox box = random_box(rng);
        for (int attempt = 0; attempt < 20; ++attempt) {
            bool clash = false;
            for (const auto& other : s.instances)
                if (iou(box, other.box) > 0.2) clash = true;
            if (!clash) break;
            box = random_box(rng);
        }
        inst.box = box;
        s.instances.push_back(std::move(inst));
    }
    return s;
}

}  // namespace

ScenarioSets generate_scenarios(std::uint64_t seed, const WorldConfig& world) {
    world.validate();
    ScenarioSets sets;
    sets.bank = make_class_bank(seed, world);
    Rng shift_rng = derive_rng(seed, "domain-shift");
    sets.shift = shift_rng.normal_vec(world.d_feat, world.shift_scale);
    const std::vector<double> zero(static_cast<std::size_t>(world.d_feat), 0.0);
    for (int i = 0; i < world.n_source; ++i) {
        Rng rng = derive_rng(seed, "scenario-src", static_cast<std::uint64_t>(i));
        sets.source.push_back(make_scenario(i, sets.bank, zero, world, rng));
    }
    for (int i = 0; i < world.n_target; ++i) {
        Rng rng = derive_rng(seed, "scenario-tgt", static_cast<std::uint64_t>(i));
        sets.target.push_back(make_scenario(i, sets.bank, sets.shift, world, rng));
    }
    return sets;
}

Scenario weak_augment(const Scenario& s, std::uint64_t seed, const WorldConfig& world) {
    Scenario out = s;
    Rng rng = derive_rng(seed, "weak-aug", static_cast<std::uint64_t>(s.image_id));
    for (auto& inst : out.instances) {
        for (auto& v : inst.signature) v += world.sigma_weak * rng.normal();
        BBox b = inst.box;
        b.x1 += rng.uniform(-0.02, 0.02);
        b.y1 += rng.uniform(-0.02, 0.02);
        b.x2 += rng.uniform(-0.02, 0.02);
        b.y2 += rng.uniform(-0.02, 0.02);
        inst.box = clamp_box(b);
    }
    return out;
}

namespace {

MaskOperator draw_mask(int level, const WorldConfig& world, Rng& rng) {
    const int d = world.d_feat;
    const int relevant = world.relevant_width();
    MaskOperator mask;
    mask.relevant_width = relevant;
    mask.keep.assign(static_cast<std::size_t>(d), 1.0);
    const bool may_hit_relevant = level >= 4 && rng.uniform() < world.p_erase;
    const int erase_n =
        static_cast<int>(std::lround(world.mask_frac[static_cast<std::size_t>(level - 1)] * d));
    std::vector<int> pool;
    for (int j = may_hit_relevant ? 0 : relevant; j < d; ++j) pool.push_back(j);
    const auto chosen = rng.sample_without_replacement(static_cast<int>(pool.size()),
                                                       std::min<int>(erase_n, static_cast<int>(pool.size())));
    for (int c : chosen) mask.keep[static_cast<std::size_t>(pool[static_cast<std::size_t>(c)])] = 0.0;
    return mask;
}

}  // namespace

std::vector<double> apply_mask(const std::vector<double>& f, const MaskOperator& mask) {
    check_config(f.size() == mask.keep.size(), "apply_mask: width mismatch");
    std::vector<double> out(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) out[j] = f[j] * mask.keep[j];
    return out;
}

std::pair<Scenario, MaskOperator> strong_augment(const Scenario& s, int level,
                                                 std::uint64_t seed, const WorldConfig& world) {
    check_config(level >= 1 && level <= 5, "strong_augment: level outside 1..5");
    Rng rng = derive_rng(seed, "strong-aug", static_cast<std::uint64_t>(s.image_id),
                         static_cast<std::uint64_t>(level));
    const MaskOperator mask = draw_mask(level, world, rng);
    Scenario out = s;
    const double noise_sd = world.level_noise * level;
    for (auto& inst : out.instances) {
        inst.signature = apply_mask(inst.signature, mask);
        for (auto& v : inst.signature) v += noise_sd * rng.normal();
    }
    return {std::move(out), mask};
}

std::vector<double> strong_mask_feature(const std::vector<double>& f, int level,
                                        const WorldConfig& world, Rng& rng) {
    check_config(level >= 1 && level <= 5, "strong_mask_feature: level outside 1..5");
    const MaskOperator mask = draw_mask(level, world, rng);
    std::vector<double> out = apply_mask(f, mask);
    const double noise_sd = world.level_noise * level;
    for (auto& v : out) v += noise_sd * rng.normal();
    return out;
}

double estimate_conditional_entropy(const Classifier& classifier,
                                    const std::vector<Scenario>& scenarios,
                                    const FeatureAugment* augment, int n_mc,
                                    std::uint64_t seed) {
    check_config(n_mc >= 1, "entropy: n_mc must be >= 1");
    auto entropy = [](const std::vector<double>& p) {
        double sum = 0.0, h = 0.0;
        for (double v : p) {
            check_compute(v >= -1e-9, "entropy: negative probability");
            sum += v;
            if (v > 0.0) h -= v * std::log(v);
        }
        check_compute(std::abs(sum - 1.0) <= 1e-6, "entropy: classifier output not normalized");
        return h;
    };
    double total = 0.0;
    long count = 0;
    Rng rng = derive_rng(seed, "entropy-mc");
    for (const auto& s : scenarios)
        for (const auto& inst : s.instances) {
            if (augment) {
                double acc = 0.0;
                for (int m = 0; m < n_mc; ++m) acc += entropy(classifier((*augment)(inst.signature, rng)));
                total += acc / n_mc;
            } else {
                total += entropy(classifier(inst.signature));
            }
            ++count;
        }
    check_config(count > 0, "entropy: no instances");
    return total / count;
}

std::vector<BBox> make_proposals(const Scenario& s, const WorldConfig& world,
                                 std::uint64_t seed, int max_proposals) {
    Rng rng = derive_rng(seed, "proposals", static_cast<std::uint64_t>(s.image_id));
    std::vector<BBox> props;
    for (const auto& inst : s.instances) {
        for (int j = 0; j < world.proposals_per_gt; ++j) {
            if (static_cast<int>(props.size()) >= max_proposals) break;
            BBox b = inst.box;
            const double jw = world.proposal_jitter * b.width();
            const double jh = world.proposal_jitter * b.height();
            b.x1 += rng.uniform(-jw, jw);
            b.x2 += rng.uniform(-jw, jw);
            b.y1 += rng.uniform(-jh, jh);
            b.y2 += rng.uniform(-jh, jh);
            props.push_back(clamp_box(b));
        }
    }
    for (int j = 0; j < world.background_proposals; ++j) {
        if (static_cast<int>(props.size()) >= max_proposals) break;
        for (int attempt = 0; attempt < 50; ++attempt) {
            const BBox b = random_box(rng);
            bool clear = true;
            for (const auto& inst : s.instances)
                if (iou(b, inst.box) >= world.background_max_iou) clear = false;
            if (clear) {
                props.push_back(b);
                break;
            }
        }
    }
    return props;
}

std::vector<GroundTruth> ground_truths(const Scenario& s) {
    std::vector<GroundTruth> gts;
    gts.reserve(s.instances.size());
    for (const auto& inst : s.instances) gts.push_back({inst.box, inst.class_id});
    return gts;
}

}  // namespace wsco
