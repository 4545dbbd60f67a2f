#pragma once

#include <cstdint>
#include <vector>

namespace qpole {

struct DurationCell {
    double mean_s = 0.0;
    double std_s = 0.0;
    int n = 0;            // pooled episode count (seeds x episodes)
    bool present = false;  // false when the checkpoint for this cell was missing
};

// Mean +/- std balancing durations over (training frequency x inference
// frequency) at a fixed inference shot count.
struct DurationMatrix {
    std::int64_t shot_count = 0;
    std::vector<double> train_freqs_hz;
    std::vector<double> inference_freqs_hz;
    std::vector<std::vector<DurationCell>> cells;  // cells[train][inference]

    bool empty() const { return train_freqs_hz.empty() || inference_freqs_hz.empty(); }
};

}  // namespace qpole
