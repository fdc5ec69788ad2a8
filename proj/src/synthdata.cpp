#include "hpt/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hpt {

namespace {

const char* kPrimaryNames[] = {"warship", "civilian", "support", "research", "patrol", "submarine"};
const char* kSecondaryNames[] = {"carrier", "destroyer", "frigate", "corvette", "tanker", "cargo",
                                 "ferry",   "tug",       "trawler", "yacht",    "cutter", "barge"};
const char* kVariantNames[] = {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"};

std::string primary_name(int i) {
    if (i < static_cast<int>(std::size(kPrimaryNames))) return kPrimaryNames[i];
    return "fleet" + std::to_string(i);
}

std::string secondary_name(int i) {
    if (i < static_cast<int>(std::size(kSecondaryNames))) return kSecondaryNames[i];
    return "type" + std::to_string(i);
}

std::string variant_name(int i) {
    if (i < static_cast<int>(std::size(kVariantNames))) return kVariantNames[i];
    return "v" + std::to_string(i);
}

void check_spec(const SynthSpec& spec) {
    if (spec.primaries < 1 || spec.secondaries_per_primary < 1 || spec.finals_per_secondary < 1 ||
        spec.images_per_class < 1)
        throw std::invalid_argument("invalid spec: counts must be >= 1");
    if (spec.class_count() < 2) throw std::invalid_argument("invalid spec: needs at least 2 classes");
    if (spec.image_size < 8) throw std::invalid_argument("invalid spec: image_size must be >= 8");
    if (spec.clutter_level < 0.0 || spec.clutter_level > 1.0)
        throw std::invalid_argument("invalid spec: clutter_level must lie in [0, 1]");
}

struct ClassIndices {
    int primary;
    int secondary_global;
    int final_local;
};

ClassDescriptor make_descriptor(const SynthSpec& spec, int class_id) {
    const int s = spec.secondaries_per_primary;
    const int f = spec.finals_per_secondary;
    ClassDescriptor c;
    c.class_id = class_id;
    const int p_idx = class_id / (s * f);
    const int s_global = class_id / f;
    const int f_local = class_id % f;
    c.primary = primary_name(p_idx);
    c.secondary = secondary_name(s_global);
    c.final = c.secondary + "-" + variant_name(f_local);
    return c;
}

ClassIndices resolve_class(const ClassDescriptor& cls, const SynthSpec& spec) {
    if (cls.class_id < 0 || cls.class_id >= spec.class_count())
        throw std::invalid_argument("foreign class: id " + std::to_string(cls.class_id));
    ClassDescriptor expected = make_descriptor(spec, cls.class_id);
    if (expected.primary != cls.primary || expected.secondary != cls.secondary || expected.final != cls.final)
        throw std::invalid_argument("foreign class: '" + cls.final + "' was not generated by this spec");
    const int f = spec.finals_per_secondary;
    return ClassIndices{cls.class_id / (spec.secondaries_per_primary * f), cls.class_id / f, cls.class_id % f};
}

// dark sea with shared-channel noise (channel offsets stay fixed, and ship
// pixels dominate the image statistics), bright hull, colored markings
constexpr double kSeaR = 0.02, kSeaG = 0.03, kSeaB = 0.06;
constexpr double kNoiseAmp = 0.02;
constexpr double kHullGrayByFamily[3] = {0.80, 0.95, 0.62};
constexpr double kStripePalette[6][3] = {{0.85, 0.15, 0.15}, {0.15, 0.75, 0.15}, {0.15, 0.25, 0.90},
                                         {0.85, 0.80, 0.15}, {0.80, 0.15, 0.80}, {0.15, 0.80, 0.80}};
constexpr double kMotifPalette[4][3] = {{0.95, 0.45, 0.05}, {0.05, 0.05, 0.50}, {0.55, 0.95, 0.10},
                                        {0.95, 0.05, 0.35}};

// distinct 16-bit motif pattern per final variant (odd multiplier is a
// bijection mod 2^16)
std::uint16_t motif_pattern(int final_local) {
    return static_cast<std::uint16_t>((static_cast<std::uint32_t>(final_local) + 1u) * 2654435761u);
}

}  // namespace

std::vector<std::uint8_t> hull_mask(int primary_family, int image_size) {
    const double s = image_size / 32.0;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(image_size) * image_size, 0);
    auto set = [&](int y, int x) {
        if (y >= 0 && y < image_size && x >= 0 && x < image_size)
            mask[static_cast<std::size_t>(y) * image_size + x] = 1;
    };
    const int family = primary_family % 3;
    if (family == 0) {
        // plain rectangular hull
        for (int y = static_cast<int>(12 * s); y < static_cast<int>(20 * s); ++y)
            for (int x = static_cast<int>(6 * s); x < static_cast<int>(26 * s); ++x) set(y, x);
    } else if (family == 1) {
        // rectangle with tapered bow
        for (int y = static_cast<int>(12 * s); y < static_cast<int>(20 * s); ++y)
            for (int x = static_cast<int>(6 * s); x < static_cast<int>(22 * s); ++x) set(y, x);
        const int bow0 = static_cast<int>(22 * s);
        const int bow1 = static_cast<int>(28 * s);
        for (int x = bow0; x < bow1; ++x) {
            const double t = (x - bow0 + 1.0) / (bow1 - bow0);
            const int inset = static_cast<int>(std::ceil(t * 4.0 * s));
            for (int y = static_cast<int>(12 * s) + inset; y < static_cast<int>(20 * s) - inset; ++y) set(y, x);
        }
    } else {
        // elliptical hull
        const double cy = (image_size - 1) / 2.0;
        const double cx = (image_size - 1) / 2.0;
        const double ry = 4.5 * s, rx = 10.5 * s;
        for (int y = 0; y < image_size; ++y)
            for (int x = 0; x < image_size; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                if (dy * dy + dx * dx <= 1.0) set(y, x);
            }
    }
    return mask;
}

std::pair<int, int> jitter_offset(const SynthSpec& spec, int index) {
    Rng rng(derive_seed(spec.seed, seed_label::synth_jitter, static_cast<std::uint64_t>(index)));
    const int dy = static_cast<int>(rng.bounded(5)) - 2;
    const int dx = static_cast<int>(rng.bounded(5)) - 2;
    return {dy, dx};
}

std::array<int, 3> motif_box(const SynthSpec& spec) {
    const double s = spec.image_size / 32.0;
    const int size = std::max(2, static_cast<int>(4 * s));
    const int y0 = static_cast<int>(14 * s);
    const int x0 = static_cast<int>(14 * s);
    return {y0, x0, size};
}

Image render_background(const SynthSpec& spec, int index) {
    check_spec(spec);
    Image img(spec.image_size, spec.image_size);
    Rng rng(derive_seed(spec.seed, seed_label::synth_background, static_cast<std::uint64_t>(index)));
    for (int y = 0; y < spec.image_size; ++y)
        for (int x = 0; x < spec.image_size; ++x) {
            const double n = (2.0 * rng.uniform() - 1.0) * kNoiseAmp * spec.clutter_level;
            img.at(0, y, x) = kSeaR + n;
            img.at(1, y, x) = kSeaG + n;
            img.at(2, y, x) = kSeaB + n;
        }
    return img;
}

std::vector<std::uint8_t> ship_mask(const ClassDescriptor& cls, const SynthSpec& spec, int index) {
    check_spec(spec);
    const ClassIndices ci = resolve_class(cls, spec);
    const auto base = hull_mask(ci.primary, spec.image_size);
    const auto [dy, dx] = jitter_offset(spec, index);
    std::vector<std::uint8_t> mask(base.size(), 0);
    const int n = spec.image_size;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (base[static_cast<std::size_t>(y) * n + x]) {
                const int ty = y + dy, tx = x + dx;
                if (ty >= 0 && ty < n && tx >= 0 && tx < n) mask[static_cast<std::size_t>(ty) * n + tx] = 1;
            }
    return mask;
}

Image render_sample(const ClassDescriptor& cls, const SynthSpec& spec, int index) {
    check_spec(spec);
    if (index < 0) throw std::invalid_argument("negative sample index");
    const ClassIndices ci = resolve_class(cls, spec);

    Image img = render_background(spec, index);
    const auto hull = hull_mask(ci.primary, spec.image_size);
    const auto [dy, dx] = jitter_offset(spec, index);
    const int n = spec.image_size;
    const double s = n / 32.0;

    // stripe layout in ship-local coordinates
    const int stripe_w = std::max(1, static_cast<int>(2 * s));
    const int period = 2 + (ci.secondary_global % 3);
    const int phase = ci.secondary_global % period;
    const double* stripe = kStripePalette[ci.secondary_global % 6];

    const auto [my0, mx0, msize] = motif_box(spec);
    const std::uint16_t pattern = motif_pattern(ci.final_local);
    const double* motif = kMotifPalette[ci.final_local % 4];
    const double hull_gray = kHullGrayByFamily[ci.primary % 3];

    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            if (!hull[static_cast<std::size_t>(y) * n + x]) continue;
            double r = hull_gray, g = hull_gray, b = hull_gray;
            if (((x / stripe_w) % period) == phase) {
                r = stripe[0];
                g = stripe[1];
                b = stripe[2];
            }
            if (y >= my0 && y < my0 + msize && x >= mx0 && x < mx0 + msize) {
                const int cell = (y - my0) * msize + (x - mx0);
                if ((pattern >> (cell % 16)) & 1u) {
                    r = motif[0];
                    g = motif[1];
                    b = motif[2];
                }
            }
            const int ty = y + dy, tx = x + dx;
            if (ty < 0 || ty >= n || tx < 0 || tx >= n) continue;
            img.at(0, ty, tx) = r;
            img.at(1, ty, tx) = g;
            img.at(2, ty, tx) = b;
        }
    return img;
}

DatasetManifest generate_dataset(const SynthSpec& spec) {
    check_spec(spec);
    DatasetManifest manifest;
    manifest.name = "synth-ships-p" + std::to_string(spec.primaries) + "s" +
                    std::to_string(spec.secondaries_per_primary) + "f" + std::to_string(spec.finals_per_secondary) +
                    "n" + std::to_string(spec.images_per_class) + "-seed" + std::to_string(spec.seed);
    const int n_classes = spec.class_count();
    manifest.classes.reserve(static_cast<std::size_t>(n_classes));
    for (int id = 0; id < n_classes; ++id) manifest.classes.push_back(make_descriptor(spec, id));
    manifest.records.reserve(static_cast<std::size_t>(n_classes) * spec.images_per_class);
    for (int id = 0; id < n_classes; ++id) {
        for (int index = 0; index < spec.images_per_class; ++index) {
            Image img = render_sample(manifest.classes[static_cast<std::size_t>(id)], spec, index);
            ImageRecord rec;
            rec.image_ref = encode_inline_payload(img);
            rec.class_id = id;
            rec.height = spec.image_size;
            rec.width = spec.image_size;
            manifest.records.push_back(std::move(rec));
        }
    }
    return manifest;
}

}  // namespace hpt
