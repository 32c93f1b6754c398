#pragma once

#include <map>
#include <string>

#include "ttrec/data.hpp"
#include "ttrec/kd.hpp"
#include "ttrec/model.hpp"

namespace ttrec {

/// Optimizer and loop settings shared by teacher training and distillation.
struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 100;
    int epochs = 30;
    double l2 = 1e-5;
    int patience = 3;          // early stopping on validation P@5 (teacher)
    std::uint64_t seed = 42;
    std::int64_t val_cap = 2000; // validation instances scored per epoch

    void validate() const {
        if (lr <= 0) throw ConfigError("train.lr: must be positive");
        if (batch_size < 1) throw ConfigError("train.batch_size: must be at least 1");
        if (epochs < 0) throw ConfigError("train.epochs: must be nonnegative");
        if (l2 < 0) throw ConfigError("train.l2: must be nonnegative");
        if (patience < 0) throw ConfigError("train.patience: must be nonnegative");
        if (val_cap < 1) throw ConfigError("train.val_cap: must be at least 1");
    }
};

/// Everything a run needs: base model hyperparameters, the student's
/// compression plan, distillation coefficients, optimizer settings and the
/// synthetic-data recipe. Loaded from a preset, then overridden by a config
/// file, then by TTREC_SECTION_KEY environment variables.
struct RunConfig {
    ModelConfig model;            // dense teacher template (num_items from data)
    FactorizedShape student_shape;
    EmbeddingMode student_mode = EmbeddingMode::kSttd;
    KDConfig kd;
    TrainConfig train;
    SynthConfig synth;

    /// Student model config derived from the teacher template plus the
    /// compression plan.
    ModelConfig student_model(std::int64_t num_items) const;
    ModelConfig teacher_model(std::int64_t num_items) const;

    void set(const std::string& key, const std::string& value);
    void validate() const;
};

RunConfig preset(const std::string& name); // "tmall", "retailrocket", "synthetic"

/// Apply "section.key = value" lines from an INI-style file.
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Apply TTREC_SECTION_KEY environment overrides.
void apply_env_overrides(RunConfig& cfg);

/// Round-trippable text form of a model configuration, used as the
/// checkpoint header.
std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

/// Parse "a,b,c" into integers.
std::vector<std::int64_t> parse_int_list(const std::string& s);

} // namespace ttrec
