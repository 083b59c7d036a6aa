#pragma once

// Random inputs shared by unit and acceptance tests.

#include <random>
#include <vector>

#include "tram/featurize.hpp"
#include "tram/nn/tensor.hpp"

namespace tram::oracle {

/// Small random day: each sensor kind independently present, up to
/// `max_samples` samples in total, irregular times inside the day, sometimes
/// with samples from neighbouring days' edges removed.
[[nodiscard]] DayStreams random_day(std::mt19937_64& rng, std::size_t max_samples = 2000);

/// Day sequences whose 33 features are sinusoids with random phase and
/// period plus small noise; windows outside [first, last) are padding.
[[nodiscard]] std::vector<DaySequence> sinusoid_sequences(std::size_t count, std::mt19937_64& rng,
                                                          bool with_padding = true);

[[nodiscard]] nn::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                       double scale = 1.0);

}  // namespace tram::oracle
