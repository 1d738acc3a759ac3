#pragma once

// Small pages and models that train in milliseconds per step.

#include "promptmerge/trainer.hpp"

namespace pm::testing {

// The tiny model on a 64x64 page, room for a few lines of glyphs.
inline ModelConfig small_config(MergeMode mode = MergeMode::Plain) {
    ModelConfig c = ModelConfig::tiny();
    c.encoder.image_height = 64;
    c.encoder.image_width = 64;
    c.encoder.mode = mode;
    c.encoder.vilma_stages = mode == MergeMode::Vilma ? std::vector<int>{1, 2, 3, 4} : std::vector<int>{};
    return c;
}

inline SynthConfig small_pages() {
    SynthConfig s;
    s.width = 64;
    s.height = 64;
    s.word_count = 4;
    s.kv_pairs = 1;
    return s;
}

inline std::vector<DocumentImage> small_corpus(int pages, std::uint64_t seed) {
    std::vector<DocumentImage> out;
    for (int i = 0; i < pages; ++i)
        out.push_back(generate_page(small_pages(), seed + static_cast<std::uint64_t>(i), "p" + std::to_string(i)));
    return out;
}

inline TrainPlan quick_plan(Stage stage, Arm arm, int steps) {
    TrainPlan p;
    p.stage = stage;
    p.arm = arm;
    p.steps = steps;
    p.warmup_steps = 1;
    p.batch_size = 2;
    p.lmpm.span_min = 8;
    p.lmpm.span_max = 16;
    return p;
}

} // namespace pm::testing
