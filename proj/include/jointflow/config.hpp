#pragma once

// Plain `key = value` configuration with '#' comments. Unknown keys,
// duplicates, and type mismatches are hard errors that name the key and
// line. The parsed struct carries every tunable of the model and the two
// training phases; LoRA alpha is derived as rank/2 and is not a key.

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "jointflow/tensor.hpp"

namespace jointflow {

struct ModelConfig {
    int image_size = 32;
    int patch = 4;
    int d_model = 64;
    int heads = 4;
    int mm_blocks = 4;
    int p_blocks = 2;
    int lora_rank = 8;
    double alpha_schedule = 3.0;  // adaptive-weight sharpness
    int num_classes = 8;          // class ids 0..num_classes-1; num_classes is the null class

    double lora_alpha() const { return lora_rank / 2.0; }
    int tokens_per_side() const { return image_size / patch; }
    int img_tokens() const { return tokens_per_side() * tokens_per_side(); }
    int patch_dim() const { return patch * patch * 3; }

    void validate() const {
        detail::require(image_size > 0 && patch > 0 && image_size % patch == 0,
                        "config: image_size must be divisible by patch");
        detail::require(d_model > 0 && heads > 0 && d_model % heads == 0,
                        "config: d_model must be divisible by heads");
        detail::require(mm_blocks >= 1 && p_blocks >= 0, "config: need at least one MM block");
        detail::require(lora_rank >= 1, "config: lora_rank must be positive");
        detail::require(num_classes >= 1, "config: num_classes must be positive");
    }
};

enum class TrainPhase { Base, Joint };

struct TrainConfig {
    TrainPhase phase = TrainPhase::Base;
    int steps = -1;  // -1 resolves to the phase default
    int batch_size = 32;
    double learning_rate = 1e-3;
    double condition_drop_prob = 0.10;
    std::uint64_t seed = 0;
    int eval_every = 500;
    std::string checkpoint_path = "checkpoint.bin";
    bool adaptive_weights_enabled = true;
    bool unbalanced_sampling_enabled = true;

    static constexpr int kDefaultBaseSteps = 8000;
    static constexpr int kDefaultJointSteps = 5000;

    int resolved_steps() const {
        if (steps >= 0) return steps;
        return phase == TrainPhase::Base ? kDefaultBaseSteps : kDefaultJointSteps;
    }

    void validate() const {
        detail::require(condition_drop_prob >= 0.0 && condition_drop_prob <= 1.0,
                        "config: condition_drop_prob outside [0,1]");
        detail::require(resolved_steps() >= 0, "config: steps must be nonnegative");
        detail::require(batch_size > 0, "config: batch_size must be positive");
        detail::require(eval_every > 0, "config: eval_every must be positive");
    }
};

struct Config {
    ModelConfig model;
    TrainConfig train;
};

namespace cfgdetail {

[[noreturn]] inline void key_fail(const std::string& key, int line, const std::string& what) {
    throw std::runtime_error("config: " + what + " for key '" + key + "' at line " +
                             std::to_string(line));
}

inline int to_int(const std::string& key, const std::string& val, int line) {
    try {
        std::size_t used = 0;
        const long v = std::stol(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        key_fail(key, line, "expected integer, got '" + val + "'");
    }
}

inline double to_double(const std::string& key, const std::string& val, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
        return v;
    } catch (const std::exception&) {
        key_fail(key, line, "expected number, got '" + val + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& val, int line) {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    key_fail(key, line, "expected true/false, got '" + val + "'");
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace cfgdetail

inline Config parse_config(const std::string& text) {
    Config cfg;
    std::map<std::string, int> seen;  // key -> first line
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        std::string line = cfgdetail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: missing '=' at line " + std::to_string(line_no));
        const std::string key = cfgdetail::trim(line.substr(0, eq));
        const std::string val = cfgdetail::trim(line.substr(eq + 1));
        if (key.empty()) cfgdetail::key_fail(key, line_no, "empty key");
        if (seen.count(key))
            cfgdetail::key_fail(key, line_no,
                                "duplicate (first seen at line " + std::to_string(seen[key]) + ")");
        seen[key] = line_no;

        using namespace cfgdetail;
        if (key == "image_size") cfg.model.image_size = to_int(key, val, line_no);
        else if (key == "patch") cfg.model.patch = to_int(key, val, line_no);
        else if (key == "d_model") cfg.model.d_model = to_int(key, val, line_no);
        else if (key == "heads") cfg.model.heads = to_int(key, val, line_no);
        else if (key == "mm_blocks") cfg.model.mm_blocks = to_int(key, val, line_no);
        else if (key == "p_blocks") cfg.model.p_blocks = to_int(key, val, line_no);
        else if (key == "lora_rank") cfg.model.lora_rank = to_int(key, val, line_no);
        else if (key == "alpha_schedule") cfg.model.alpha_schedule = to_double(key, val, line_no);
        else if (key == "num_classes") cfg.model.num_classes = to_int(key, val, line_no);
        else if (key == "phase") {
            if (val == "base") cfg.train.phase = TrainPhase::Base;
            else if (val == "joint") cfg.train.phase = TrainPhase::Joint;
            else key_fail(key, line_no, "expected base|joint, got '" + val + "'");
        }
        else if (key == "steps") cfg.train.steps = to_int(key, val, line_no);
        else if (key == "batch_size") cfg.train.batch_size = to_int(key, val, line_no);
        else if (key == "learning_rate") cfg.train.learning_rate = to_double(key, val, line_no);
        else if (key == "condition_drop_prob")
            cfg.train.condition_drop_prob = to_double(key, val, line_no);
        else if (key == "seed")
            cfg.train.seed = static_cast<std::uint64_t>(std::stoull(val));
        else if (key == "eval_every") cfg.train.eval_every = to_int(key, val, line_no);
        else if (key == "checkpoint_path") cfg.train.checkpoint_path = val;
        else if (key == "adaptive_weights_enabled")
            cfg.train.adaptive_weights_enabled = to_bool(key, val, line_no);
        else if (key == "unbalanced_sampling_enabled")
            cfg.train.unbalanced_sampling_enabled = to_bool(key, val, line_no);
        else cfgdetail::key_fail(key, line_no, "unknown key");
    }
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

// The resolved configuration echoed into run logs, one key per line.
inline std::string dump_config(const Config& cfg) {
    std::ostringstream out;
    out << "image_size = " << cfg.model.image_size << '\n'
        << "patch = " << cfg.model.patch << '\n'
        << "d_model = " << cfg.model.d_model << '\n'
        << "heads = " << cfg.model.heads << '\n'
        << "mm_blocks = " << cfg.model.mm_blocks << '\n'
        << "p_blocks = " << cfg.model.p_blocks << '\n'
        << "lora_rank = " << cfg.model.lora_rank << '\n'
        << "alpha_schedule = " << cfg.model.alpha_schedule << '\n'
        << "num_classes = " << cfg.model.num_classes << '\n'
        << "phase = " << (cfg.train.phase == TrainPhase::Base ? "base" : "joint") << '\n'
        << "steps = " << cfg.train.resolved_steps() << '\n'
        << "batch_size = " << cfg.train.batch_size << '\n'
        << "learning_rate = " << cfg.train.learning_rate << '\n'
        << "condition_drop_prob = " << cfg.train.condition_drop_prob << '\n'
        << "seed = " << cfg.train.seed << '\n'
        << "eval_every = " << cfg.train.eval_every << '\n'
        << "checkpoint_path = " << cfg.train.checkpoint_path << '\n'
        << "adaptive_weights_enabled = " << (cfg.train.adaptive_weights_enabled ? "true" : "false")
        << '\n'
        << "unbalanced_sampling_enabled = "
        << (cfg.train.unbalanced_sampling_enabled ? "true" : "false") << '\n';
    return out.str();
}

}  // namespace jointflow
