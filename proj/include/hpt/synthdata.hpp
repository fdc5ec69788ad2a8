#pragma once

#include <array>
#include <cstdint>

#include "hpt/image_io.hpp"
#include "hpt/taxonomy.hpp"

namespace hpt {

// Procedural hierarchical ship dataset: primary picks the hull silhouette,
// secondary the deck stripe pattern, final a small motif. Backgrounds and
// jitter are keyed on (seed, sample index) only, so classes rendered at the
// same index differ exactly where their labels differ.
struct SynthSpec {
    int primaries = 2;
    int secondaries_per_primary = 3;
    int finals_per_secondary = 2;
    int images_per_class = 8;
    int image_size = 32;
    double clutter_level = 0.1;
    std::uint64_t seed = 1;

    int class_count() const { return primaries * secondaries_per_primary * finals_per_secondary; }
};

DatasetManifest generate_dataset(const SynthSpec& spec);

Image render_sample(const ClassDescriptor& cls, const SynthSpec& spec, int index);

// Exposed pieces of the renderer, used by tests and the heatmap diagnostics.
Image render_background(const SynthSpec& spec, int index);
std::vector<std::uint8_t> hull_mask(int primary_family, int image_size);  // H*W flags, pre-jitter
std::pair<int, int> jitter_offset(const SynthSpec& spec, int index);      // (dy, dx) in [-2, 2]
std::array<int, 3> motif_box(const SynthSpec& spec);                      // pre-jitter {y0, x0, size}
std::vector<std::uint8_t> ship_mask(const ClassDescriptor& cls, const SynthSpec& spec, int index);  // jittered

}  // namespace hpt
