#pragma once

#include <filesystem>
#include <vector>

#include "refsr/dataset.hpp"
#include "refsr/training.hpp"

namespace refsr::testing {

/// Narrow networks and short schedules for desk-scale runs.
TrainConfig desk_config(int s = 8);

/// `count` triples cut from a freshly written synthetic corpus under `dir`.
std::vector<TrainingTriple> toy_triples(const std::filesystem::path& dir, int count, int s, int tile,
                                        std::uint64_t seed, int paintings = 4);

}  // namespace refsr::testing
