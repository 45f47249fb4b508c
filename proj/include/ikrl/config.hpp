#pragma once

#include <cstdint>
#include <string>

#include "errors.hpp"
#include "matrix.hpp"
#include "model.hpp"

namespace ikrl {

enum class EnergyModel {
    Ikrl,    // E_SS + E_SI + E_IS + E_II
    TransE,  // E_SS only
};

enum class InitMode { Random, Pretrained };

// Defaults target real image data: 4096-wide CNN features, up to 10 images per entity.
struct TrainConfig {
    double margin = 4.0;
    double lr_start = 0.001;
    double lr_end = 0.0002;
    std::size_t epochs = 1000;
    std::size_t batch_size = 100;
    std::size_t dim = 50;
    std::size_t image_dim = 4096;
    std::size_t max_images = 10;
    Aggregation aggregation = Aggregation::Att;
    Norm norm = Norm::L1;
    EnergyModel model = EnergyModel::Ikrl;
    InitMode init = InitMode::Random;
    std::string pretrained_checkpoint;
    std::uint64_t seed = 0;
    bool attention_detached = false;
    std::size_t threads = 1;  // 0 = all logical cores

    void validate() const {
        if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
        if (!(lr_end > 0.0)) throw ConfigError("lr_end must be > 0");
        if (!(lr_start >= lr_end)) throw ConfigError("lr_start must be >= lr_end");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (dim < 1) throw ConfigError("dim must be >= 1");
        if (image_dim < 1) throw ConfigError("image_dim must be >= 1");
        if (max_images < 1) throw ConfigError("max_images must be >= 1");
        if (init == InitMode::Pretrained && pretrained_checkpoint.empty())
            throw ConfigError("init = pretrained requires pretrained_checkpoint");
    }
};

}  // namespace ikrl
