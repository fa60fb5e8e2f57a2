#include "sdlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace sdlab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg);
}

const json& section(const json& cfg, const char* name, bool required = true) {
    static const json empty = json::object();
    auto it = cfg.find(name);
    if (it == cfg.end()) {
        if (required) fail(name, "section is missing");
        return empty;
    }
    if (!it->is_object()) fail(name, "must be an object");
    return *it;
}

template <typename T>
T get_field(const json& j, const std::string& section_name, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) fail(section_name + "." + key, "field is missing");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        fail(section_name + "." + key, e.what());
    }
}

template <typename T>
T get_field_or(const json& j, const std::string& section_name, const char* key, T def) {
    auto it = j.find(key);
    if (it == j.end()) return def;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        fail(section_name + "." + key, e.what());
    }
}

NoiseSchedule schedule_from(const json& cfg) {
    const json& s = section(cfg, "schedule", false);
    int total = get_field_or<int>(s, "schedule", "total_steps", 1000);
    double b0 = get_field_or<double>(s, "schedule", "beta_start", 1e-4);
    double b1 = get_field_or<double>(s, "schedule", "beta_end", 0.02);
    try {
        return make_schedule(total, b0, b1);
    } catch (const std::invalid_argument& e) {
        fail("schedule", e.what());
    }
}

GmmPrior prior_from(const json& cfg) {
    const json& p = section(cfg, "prior");
    GmmPrior prior;
    prior.dim = get_field<int>(p, "prior", "dim");
    auto comps = p.find("components");
    if (comps == p.end() || !comps->is_array() || comps->empty())
        fail("prior.components", "non-empty array required");
    double wsum = 0.0;
    for (const auto& cj : *comps) {
        GmmComponent c;
        c.weight = get_field<double>(cj, "prior.components[]", "weight");
        c.mean = get_field<Vec>(cj, "prior.components[]", "mean");
        c.variance = get_field<double>(cj, "prior.components[]", "variance");
        wsum += c.weight;
        prior.components.push_back(std::move(c));
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        fail("prior.components", "weights must sum to 1 (got " + std::to_string(wsum) + ")");
    for (auto& c : prior.components) c.weight /= wsum;  // exact renormalization
    if (auto tm = p.find("text_map"); tm != p.end()) {
        if (!tm->is_object()) fail("prior.text_map", "must be an object");
        for (auto it = tm->begin(); it != tm->end(); ++it)
            prior.text_map[it.key()] = it.value().get<std::vector<int>>();
    }
    prior.image_bandwidth = get_field_or<double>(p, "prior", "image_bandwidth", 0.1);
    try {
        prior.validate();
    } catch (const std::invalid_argument& e) {
        fail("prior", e.what());
    }
    return prior;
}

ViewSet views_from(const json& cfg, int dim) {
    const json& v = section(cfg, "views", false);
    int world_dim = get_field_or<int>(v, "views", "world_dim", dim);
    int count = get_field_or<int>(v, "views", "count", 1);
    uint64_t seed = get_field_or<uint64_t>(v, "views", "seed", 0);
    try {
        return make_views(world_dim, dim, count, seed);
    } catch (const std::invalid_argument& e) {
        fail("views", e.what());
    }
}

EncodeMode encode_from(const json& cfg) {
    const json& v = section(cfg, "views", false);
    std::string mode = get_field_or<std::string>(v, "views", "encode", "identity");
    if (mode == "identity") return EncodeMode::Identity;
    if (mode == "fixed-linear") return EncodeMode::FixedLinear;
    fail("views.encode", "unknown mode '" + mode + "' (identity | fixed-linear)");
}

GuidanceConfig guidance_from(const json& cfg) {
    const json& g = section(cfg, "guidance");
    GuidanceConfig gc;
    std::string variant = get_field<std::string>(g, "guidance", "variant");
    try {
        gc.variant = variant_from_name(variant);
    } catch (const std::invalid_argument& e) {
        fail("guidance.variant", e.what());
    }
    gc.omega = get_field_or<double>(g, "guidance", "omega", default_omega(gc.variant));
    gc.gamma = get_field_or<double>(g, "guidance", "gamma", 0.03);
    gc.include_m2 = get_field_or<bool>(g, "guidance", "include_m2", true);
    gc.target_cfg = get_field_or<bool>(g, "guidance", "target_cfg", false);
    gc.neg_label = get_field_or<std::string>(g, "guidance", "neg_label", "");
    std::string wm = get_field_or<std::string>(g, "guidance", "weight_mode", "constant-one");
    if (wm == "constant-one")
        gc.weight_mode = WeightMode::ConstantOne;
    else if (wm == "sigma-squared")
        gc.weight_mode = WeightMode::SigmaSquared;
    else
        fail("guidance.weight_mode", "unknown mode '" + wm + "' (constant-one | sigma-squared)");
    return gc;
}

}  // namespace

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("parse error in '" + path + "': " + e.what());
    }
}

Experiment experiment_from_json(const nlohmann::json& cfg) {
    Experiment exp;
    exp.sched = schedule_from(cfg);
    exp.prior = prior_from(cfg);
    exp.views = views_from(cfg, exp.prior.dim);

    const json& p = section(cfg, "prior");
    std::string prior_kind = get_field_or<std::string>(p, "prior", "kind", "analytic");
    if (prior_kind == "analytic") {
        exp.run.prior_kind = PriorKind::Analytic;
    } else if (prior_kind == "learned") {
        exp.run.prior_kind = PriorKind::Learned;
        std::string ckpt = get_field<std::string>(p, "prior", "checkpoint");
        try {
            exp.denoiser = std::make_shared<Denoiser>(load_checkpoint(ckpt));
        } catch (const std::exception& e) {
            fail("prior.checkpoint", e.what());
        }
        if (exp.denoiser->dim != exp.prior.dim)
            fail("prior.checkpoint", "checkpoint dimension does not match prior.dim");
        if (exp.denoiser->total_steps != exp.sched.total_steps)
            fail("prior.checkpoint", "checkpoint schedule length does not match schedule.total_steps");
    } else {
        fail("prior.kind", "unknown kind '" + prior_kind + "' (analytic | learned)");
    }

    exp.run.guidance = guidance_from(cfg);
    exp.run.encode = encode_from(cfg);

    const json& r = section(cfg, "run");
    exp.run.steps = get_field<int>(r, "run", "steps");
    exp.run.seed = get_field_or<uint64_t>(r, "run", "seed", 0);
    exp.run.lr = get_field_or<double>(r, "run", "lr", 0.01);
    std::string opt = get_field_or<std::string>(r, "run", "optimizer", "adam");
    if (opt == "adam")
        exp.run.optimizer = OptimKind::Adam;
    else if (opt == "sgd")
        exp.run.optimizer = OptimKind::Sgd;
    else
        fail("run.optimizer", "unknown optimizer '" + opt + "' (sgd | adam)");
    exp.run.beta1 = get_field_or<double>(r, "run", "beta1", 0.9);
    exp.run.beta2 = get_field_or<double>(r, "run", "beta2", 0.999);
    exp.run.adam_eps = get_field_or<double>(r, "run", "adam_eps", 1e-8);
    exp.run.t_min_frac = get_field_or<double>(r, "run", "t_min_frac", 0.02);
    exp.run.t_max_frac = get_field_or<double>(r, "run", "t_max_frac", 0.98);
    exp.run.text = get_field<std::string>(r, "run", "text");
    exp.run.particles = get_field_or<int>(r, "run", "particles", 1);
    exp.run.finetune_period = get_field_or<int>(r, "run", "finetune_period", 10);
    exp.run.finetune_lr = get_field_or<double>(r, "run", "finetune_lr", 1e-4);
    if (auto init = r.find("init"); init != r.end()) {
        std::string kind = get_field_or<std::string>(*init, "run.init", "kind", "zeros");
        if (kind == "zeros") {
            exp.run.init.kind = InitSpec::Kind::Zeros;
        } else if (kind == "gauss") {
            exp.run.init.kind = InitSpec::Kind::Gauss;
            exp.run.init.scale = get_field_or<double>(*init, "run.init", "scale", 1.0);
        } else if (kind == "explicit") {
            exp.run.init.kind = InitSpec::Kind::Explicit;
            exp.run.init.value = get_field<Vec>(*init, "run.init", "value");
        } else {
            fail("run.init.kind", "unknown kind '" + kind + "' (zeros | gauss | explicit)");
        }
    }

    if (exp.run.init.kind == InitSpec::Kind::Explicit &&
        static_cast<int>(exp.run.init.value.size()) != exp.views.views[0].world_dim)
        fail("run.init.value", "dimension does not match views.world_dim");

    const json& m = section(cfg, "metrics", false);
    exp.run.metric_every = get_field_or<int>(m, "metrics", "source_target_every", 0);
    exp.run.metric_target_samples = get_field_or<int>(m, "metrics", "target_samples", 10000);
    exp.run.metric_seed = get_field_or<uint64_t>(m, "metrics", "seed", 1234);

    if (exp.prior.text_map.find(exp.run.text) == exp.prior.text_map.end())
        fail("run.text", "label '" + exp.run.text + "' is not in prior.text_map");
    if (!exp.run.guidance.neg_label.empty() &&
        exp.prior.text_map.find(exp.run.guidance.neg_label) == exp.prior.text_map.end())
        fail("guidance.neg_label", "label '" + exp.run.guidance.neg_label + "' is not in prior.text_map");
    if (exp.run.prior_kind == PriorKind::Learned && exp.denoiser) {
        const auto& L = exp.denoiser->labels;
        if (std::find(L.begin(), L.end(), exp.run.text) == L.end())
            fail("run.text", "label '" + exp.run.text + "' is not in the checkpoint's label set");
    }

    try {
        exp.run.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return exp;
}

void set_variant(nlohmann::json& cfg, const std::string& variant) {
    variant_from_name(variant);  // validates
    cfg["guidance"]["variant"] = variant;
}

void set_seed(nlohmann::json& cfg, uint64_t seed) { cfg["run"]["seed"] = seed; }

TrainPriorJob train_job_from_json(const nlohmann::json& cfg) {
    TrainPriorJob job;
    job.sched = schedule_from(cfg);
    job.prior = prior_from(cfg);
    const json& t = section(cfg, "train");
    job.pretrain.steps = get_field_or<int>(t, "train", "steps", 20000);
    job.pretrain.batch = get_field_or<int>(t, "train", "batch", 64);
    job.pretrain.lr = get_field_or<double>(t, "train", "lr", 1e-3);
    job.pretrain.seed = get_field_or<uint64_t>(t, "train", "seed", 0);
    job.width = get_field_or<int>(t, "train", "width", 128);
    job.adapter_hidden = get_field_or<int>(t, "train", "adapter_hidden", 32);
    job.checkpoint_out = get_field<std::string>(t, "train", "checkpoint_out");
    job.loss_curve_out = get_field_or<std::string>(t, "train", "loss_curve_out", "");
    if (job.pretrain.steps < 0) fail("train.steps", "must be >= 0");
    if (job.prior.text_map.empty()) fail("prior.text_map", "learned prior needs at least one text label");
    return job;
}

}  // namespace sdlab
