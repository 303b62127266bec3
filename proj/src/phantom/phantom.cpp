// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "voxsyn/core/preprocess.hpp"
#include "voxsyn/orch/fvol.hpp"
#include "voxsyn/util/rng.hpp"

namespace voxsyn::phantom {

namespace {

constexpr uint64_t kTagGeometry = 0x67656f6dull;   // liver shape draws
constexpr uint64_t kTagVessels = 0x7665736cull;
constexpr uint64_t kTagTumor = 0x74756d72ull;
constexpr uint64_t kTagIntensity = 0x696e7473ull;

struct Vec3 {
    double h, w, d;
};

double dot(const Vec3& a, const Vec3& b) { return a.h * b.h + a.w * b.w + a.d * b.d; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Smooth direction-dependent boundary perturbation for the star-shaped
/// liver: a short sum of cosines of fixed integer frequency vectors.
struct StarPerturbation {
    static constexpr int kTerms = 4;
    std::array<Vec3, kTerms> freq;
    std::array<double, kTerms> amp;
    std::array<double, kTerms> phase;

    static StarPerturbation draw(Rng& rng, double total_amplitude) {
        StarPerturbation p;
        double budget = total_amplitude / kTerms;
        for (int i = 0; i < kTerms; ++i) {
            p.freq[i] = Vec3{std::floor(rng.uniform(1.0, 4.0)),
                             std::floor(rng.uniform(1.0, 4.0)),
                             std::floor(rng.uniform(1.0, 4.0))};
            p.amp[i] = rng.uniform(0.3, 1.0) * budget;
            p.phase[i] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        }
        return p;
    }

    double operator()(const Vec3& unit_dir) const {
        double v = 0;
        for (int i = 0; i < kTerms; ++i)
            v += amp[i] * std::cos(dot(freq[i], unit_dir) * 2.5 + phase[i]);
        return v;
    }
};

int64_t flat_index(const core::VolumeShape& s, int64_t h, int64_t w, int64_t d) {
    return (d * s.height + h) * s.width + w;
}

/// Keeps only the largest 6-connected component in-place; returns its size.
int64_t keep_largest_component(std::vector<uint8_t>& mask, const core::VolumeShape& s) {
    std::vector<int32_t> comp(mask.size(), -1);
    int32_t ncomp = 0;
    std::vector<int64_t> sizes;
    std::deque<int64_t> queue;
    for (int64_t d = 0; d < s.depth; ++d)
        for (int64_t h = 0; h < s.height; ++h)
            for (int64_t w = 0; w < s.width; ++w) {
                int64_t idx = flat_index(s, h, w, d);
                if (!mask[static_cast<size_t>(idx)] || comp[static_cast<size_t>(idx)] >= 0)
                    continue;
                int32_t id = ncomp++;
                sizes.push_back(0);
                comp[static_cast<size_t>(idx)] = id;
                queue.push_back(idx);
                while (!queue.empty()) {
                    int64_t cur = queue.front();
                    queue.pop_front();
                    ++sizes[static_cast<size_t>(id)];
                    int64_t cw = cur % s.width;
                    int64_t ch = (cur / s.width) % s.height;
                    int64_t cd = cur / (s.width * s.height);
                    const int64_t nh[6] = {ch - 1, ch + 1, ch, ch, ch, ch};
                    const int64_t nw[6] = {cw, cw, cw - 1, cw + 1, cw, cw};
                    const int64_t nd[6] = {cd, cd, cd, cd, cd - 1, cd + 1};
                    for (int k = 0; k < 6; ++k) {
                        if (nh[k] < 0 || nh[k] >= s.height || nw[k] < 0 ||
                            nw[k] >= s.width || nd[k] < 0 || nd[k] >= s.depth)
                            continue;
                        int64_t ni = flat_index(s, nh[k], nw[k], nd[k]);
                        if (mask[static_cast<size_t>(ni)] &&
                            comp[static_cast<size_t>(ni)] < 0) {
                            comp[static_cast<size_t>(ni)] = id;
                            queue.push_back(ni);
                        }
                    }
                }
            }
    if (ncomp <= 1) return ncomp == 1 ? sizes[0] : 0;
    int32_t best = 0;
    for (int32_t i = 1; i < ncomp; ++i)
        if (sizes[static_cast<size_t>(i)] > sizes[static_cast<size_t>(best)]) best = i;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i] && comp[i] != best) mask[i] = 0;
    return sizes[static_cast<size_t>(best)];
}

struct Segment {
    Vec3 a, b;
    double radius;
};

double dist_to_segment(const Vec3& p, const Segment& s) {
    Vec3 ab{s.b.h - s.a.h, s.b.w - s.a.w, s.b.d - s.a.d};
    Vec3 ap{p.h - s.a.h, p.w - s.a.w, p.d - s.a.d};
    double len2 = dot(ab, ab);
    double t = len2 > 0 ? std::clamp(dot(ap, ab) / len2, 0.0, 1.0) : 0.0;
    Vec3 closest{s.a.h + t * ab.h, s.a.w + t * ab.w, s.a.d + t * ab.d};
    Vec3 delta{p.h - closest.h, p.w - closest.w, p.d - closest.d};
    return norm(delta);
}

/// Rasterizes tube segments onto voxels already labelled as liver.
void paint_segments(core::LabelMap& label, const std::vector<Segment>& segments,
                    uint8_t cls) {
    const auto& s = label.shape;
    for (const auto& seg : segments) {
        int64_t h0 = static_cast<int64_t>(std::floor(std::min(seg.a.h, seg.b.h) - seg.radius - 1));
        int64_t h1 = static_cast<int64_t>(std::ceil(std::max(seg.a.h, seg.b.h) + seg.radius + 1));
        int64_t w0 = static_cast<int64_t>(std::floor(std::min(seg.a.w, seg.b.w) - seg.radius - 1));
        int64_t w1 = static_cast<int64_t>(std::ceil(std::max(seg.a.w, seg.b.w) + seg.radius + 1));
        int64_t d0 = static_cast<int64_t>(std::floor(std::min(seg.a.d, seg.b.d) - seg.radius - 1));
        int64_t d1 = static_cast<int64_t>(std::ceil(std::max(seg.a.d, seg.b.d) + seg.radius + 1));
        for (int64_t d = std::max<int64_t>(0, d0); d <= std::min(s.depth - 1, d1); ++d)
            for (int64_t h = std::max<int64_t>(0, h0); h <= std::min(s.height - 1, h1); ++h)
                for (int64_t w = std::max<int64_t>(0, w0); w <= std::min(s.width - 1, w1); ++w) {
                    if (label.at(h, w, d) != 1) continue;  // clip to liver interior
                    Vec3 p{static_cast<double>(h), static_cast<double>(w),
                           static_cast<double>(d)};
                    if (dist_to_segment(p, seg) <= seg.radius) label.at(h, w, d) = cls;
                }
    }
}

std::vector<Segment> grow_vessel_tree(Rng& rng, const Vec3& start, double base_radius,
                                      int max_depth) {
    std::vector<Segment> out;
    struct Branch {
        Vec3 pos, dir;
        double radius;
        int depth;
    };
    std::vector<Branch> stack;
    Vec3 dir{rng.normal(), rng.normal(), rng.normal() * 0.5};
    double n = norm(dir);
    if (n < 1e-9) dir = Vec3{1, 0, 0};
    else dir = Vec3{dir.h / n, dir.w / n, dir.d / n};
    stack.push_back({start, dir, base_radius, 0});
    while (!stack.empty()) {
        Branch b = stack.back();
        stack.pop_back();
        int steps = static_cast<int>(rng.uniform_int(3, 5));
        Vec3 pos = b.pos;
        Vec3 d = b.dir;
        for (int i = 0; i < steps; ++i) {
            Vec3 jitter{rng.normal() * 0.4, rng.normal() * 0.4, rng.normal() * 0.2};
            Vec3 nd{d.h + jitter.h, d.w + jitter.w, d.d + jitter.d};
            double nn = norm(nd);
            if (nn > 1e-9) d = Vec3{nd.h / nn, nd.w / nn, nd.d / nn};
            double len = rng.uniform(2.0, 4.0);
            Vec3 next{pos.h + d.h * len, pos.w + d.w * len, pos.d + d.d * len};
            out.push_back({pos, next, b.radius});
            pos = next;
            if (b.depth < max_depth && rng.uniform() < 0.35)
                stack.push_back({pos, Vec3{d.w, -d.h, d.d}, b.radius * 0.8, b.depth + 1});
        }
    }
    return out;
}

}  // namespace

void PhantomParams::validate() const {
    roi_shape.validate();
    const int64_t dims[3] = {roi_shape.height, roi_shape.width, roi_shape.depth};
    for (int i = 0; i < 3; ++i) {
        require(liver_axes_range[static_cast<size_t>(i)][0] > 0 &&
                    liver_axes_range[static_cast<size_t>(i)][0] <=
                        liver_axes_range[static_cast<size_t>(i)][1],
                Error::Kind::validation, "PhantomParams: empty liver axes range");
        require(liver_axes_range[static_cast<size_t>(i)][1] <=
                    static_cast<double>(dims[i]) / 2.0 - 1.0,
                Error::Kind::validation,
                "PhantomParams: liver semi-axes do not fit inside the ROI");
    }
    require(vessel_count_range[0] >= 0 && vessel_count_range[0] <= vessel_count_range[1],
            Error::Kind::validation, "PhantomParams: empty vessel count range");
    require(tumor_probability >= 0.0 && tumor_probability <= 1.0, Error::Kind::validation,
            "PhantomParams: tumor_probability must be in [0,1]");
    require(tumor_radius_range[0] > 0 && tumor_radius_range[0] <= tumor_radius_range[1],
            Error::Kind::validation, "PhantomParams: empty tumor radius range");
    for (size_t i = 0; i < intensity_means.size(); ++i) {
        require(intensity_means[i] >= 0.0 && intensity_means[i] <= 1.0,
                Error::Kind::validation, "PhantomParams: intensity means must be in [0,1]");
        for (size_t j = i + 1; j < intensity_means.size(); ++j)
            require(std::abs(intensity_means[i] - intensity_means[j]) >= 0.05,
                    Error::Kind::validation,
                    "PhantomParams: intensity means closer than the 0.05 separability gap");
    }
    require(noise_sigma >= 0.0, Error::Kind::validation,
            "PhantomParams: noise_sigma must be >= 0");
    require(bias_field_amplitude >= 0.0, Error::Kind::validation,
            "PhantomParams: bias_field_amplitude must be >= 0");
}

int count_components_6(const std::vector<uint8_t>& mask, const core::VolumeShape& shape) {
    std::vector<uint8_t> work = mask;
    int count = 0;
    core::VolumeShape s = shape;
    std::deque<int64_t> queue;
    for (size_t start = 0; start < work.size(); ++start) {
        if (!work[start]) continue;
        ++count;
        work[start] = 0;
        queue.push_back(static_cast<int64_t>(start));
        while (!queue.empty()) {
            int64_t cur = queue.front();
            queue.pop_front();
            int64_t cw = cur % s.width;
            int64_t ch = (cur / s.width) % s.height;
            int64_t cd = cur / (s.width * s.height);
            const int64_t nh[6] = {ch - 1, ch + 1, ch, ch, ch, ch};
            const int64_t nw[6] = {cw, cw, cw - 1, cw + 1, cw, cw};
            const int64_t nd[6] = {cd, cd, cd, cd, cd - 1, cd + 1};
            for (int k = 0; k < 6; ++k) {
                if (nh[k] < 0 || nh[k] >= s.height || nw[k] < 0 || nw[k] >= s.width ||
                    nd[k] < 0 || nd[k] >= s.depth)
                    continue;
                int64_t ni = flat_index(s, nh[k], nw[k], nd[k]);
                if (work[static_cast<size_t>(ni)]) {
                    work[static_cast<size_t>(ni)] = 0;
                    queue.push_back(ni);
                }
            }
        }
    }
    return count;
}

PhantomSample generate_phantom(uint64_t seed, const PhantomParams& params) {
    params.validate();
    const auto& s = params.roi_shape;

    // --- Liver: star-shaped implicit region, largest component kept. ---
    Rng geo(derive_seed(seed, {kTagGeometry}));
    const double dims[3] = {static_cast<double>(s.height), static_cast<double>(s.width),
                            static_cast<double>(s.depth)};
    Vec3 axes{geo.uniform(params.liver_axes_range[0][0], params.liver_axes_range[0][1]),
              geo.uniform(params.liver_axes_range[1][0], params.liver_axes_range[1][1]),
              geo.uniform(params.liver_axes_range[2][0], params.liver_axes_range[2][1])};
    Vec3 center{dims[0] / 2.0, dims[1] / 2.0, dims[2] / 2.0};
    // Jitter bounded so the perturbed surface stays strictly inside the ROI.
    auto jitter_span = [&](double dim, double axis) {
        return std::max(0.0, dim / 2.0 - 1.0 - axis * 1.15);
    };
    center.h += geo.uniform(-1.0, 1.0) * std::min(0.08 * dims[0], jitter_span(dims[0], axes.h));
    center.w += geo.uniform(-1.0, 1.0) * std::min(0.08 * dims[1], jitter_span(dims[1], axes.w));
    center.d += geo.uniform(-1.0, 1.0) * std::min(0.08 * dims[2], jitter_span(dims[2], axes.d));
    StarPerturbation bumps = StarPerturbation::draw(geo, 0.15);

    core::LabelMap label = core::LabelMap::zeros(s, 5);
    for (int64_t d = 0; d < s.depth; ++d)
        for (int64_t h = 0; h < s.height; ++h)
            for (int64_t w = 0; w < s.width; ++w) {
                Vec3 rel{(static_cast<double>(h) - center.h) / axes.h,
                         (static_cast<double>(w) - center.w) / axes.w,
                         (static_cast<double>(d) - center.d) / axes.d};
                double rho = norm(rel);
                if (rho < 1e-9) {
                    label.at(h, w, d) = 1;
                    continue;
                }
                Vec3 unit{rel.h / rho, rel.w / rho, rel.d / rho};
                if (rho <= 1.0 + bumps(unit)) label.at(h, w, d) = 1;
            }

    std::vector<uint8_t> liver_mask(label.data.size());
    for (size_t i = 0; i < label.data.size(); ++i) liver_mask[i] = label.data[i] == 1;
    keep_largest_component(liver_mask, s);
    std::vector<int64_t> liver_voxels;
    for (size_t i = 0; i < label.data.size(); ++i) {
        label.data[i] = liver_mask[i] ? 1 : 0;
        if (liver_mask[i]) liver_voxels.push_back(static_cast<int64_t>(i));
    }

    // --- Vessels: branching tube sweeps clipped to the liver. ---
    Rng ves(derive_seed(seed, {kTagVessels}));
    for (uint8_t cls : {uint8_t{2}, uint8_t{3}}) {
        int count = static_cast<int>(
            ves.uniform_int(params.vessel_count_range[0], params.vessel_count_range[1]));
        for (int v = 0; v < count && !liver_voxels.empty(); ++v) {
            int64_t pick = liver_voxels[static_cast<size_t>(
                ves.uniform_int(0, static_cast<int64_t>(liver_voxels.size()) - 1))];
            Vec3 start{static_cast<double>((pick / s.width) % s.height),
                       static_cast<double>(pick % s.width),
                       static_cast<double>(pick / (s.width * s.height))};
            double radius = cls == 2 ? 1.5 : 1.3;
            auto segments = grow_vessel_tree(ves, start, radius, 2);
            paint_segments(label, segments, cls);
        }
    }

    // --- Tumor: a blob that fits entirely inside the liver support. ---
    Rng tum(derive_seed(seed, {kTagTumor}));
    bool has_tumor = false;
    if (tum.uniform() < params.tumor_probability && !liver_voxels.empty()) {
        double radius = tum.uniform(params.tumor_radius_range[0], params.tumor_radius_range[1]);
        int64_t ir = static_cast<int64_t>(std::ceil(radius));
        for (int attempt = 0; attempt < 50 && !has_tumor; ++attempt) {
            int64_t pick = liver_voxels[static_cast<size_t>(
                tum.uniform_int(0, static_cast<int64_t>(liver_voxels.size()) - 1))];
            int64_t cw = pick % s.width;
            int64_t ch = (pick / s.width) % s.height;
            int64_t cd = pick / (s.width * s.height);
            bool fits = true;
            for (int64_t d = cd - ir; d <= cd + ir && fits; ++d)
                for (int64_t h = ch - ir; h <= ch + ir && fits; ++h)
                    for (int64_t w = cw - ir; w <= cw + ir && fits; ++w) {
                        double dist = std::sqrt(double((h - ch) * (h - ch) +
                                                       (w - cw) * (w - cw) +
                                                       (d - cd) * (d - cd)));
                        if (dist > radius) continue;
                        if (h < 0 || h >= s.height || w < 0 || w >= s.width || d < 0 ||
                            d >= s.depth || !liver_mask[static_cast<size_t>(
                                                flat_index(s, h, w, d))])
                            fits = false;
                    }
            if (!fits) continue;
            for (int64_t d = cd - ir; d <= cd + ir; ++d)
                for (int64_t h = ch - ir; h <= ch + ir; ++h)
                    for (int64_t w = cw - ir; w <= cw + ir; ++w) {
                        double dist = std::sqrt(double((h - ch) * (h - ch) +
                                                       (w - cw) * (w - cw) +
                                                       (d - cd) * (d - cd)));
                        if (dist <= radius) label.at(h, w, d) = 4;
                    }
            has_tumor = true;
        }
    }

    // --- Intensities: class means x smooth bias field + Gaussian noise. ---
    Rng inten(derive_seed(seed, {kTagIntensity}));
    double coeff[9];
    double coeff_sum = 0;
    for (double& c : coeff) {
        c = inten.uniform(-1.0, 1.0);
        coeff_sum += std::abs(c);
    }
    if (coeff_sum > 0)
        for (double& c : coeff) c /= coeff_sum;

    core::Volume vol = core::Volume::zeros(s);
    for (int64_t d = 0; d < s.depth; ++d)
        for (int64_t h = 0; h < s.height; ++h)
            for (int64_t w = 0; w < s.width; ++w) {
                double x = 2.0 * static_cast<double>(h) / dims[0] - 1.0;
                double y = 2.0 * static_cast<double>(w) / dims[1] - 1.0;
                double z = 2.0 * static_cast<double>(d) / dims[2] - 1.0;
                double poly = coeff[0] * x + coeff[1] * y + coeff[2] * z +
                              coeff[3] * x * y + coeff[4] * x * z + coeff[5] * y * z +
                              coeff[6] * x * x + coeff[7] * y * y + coeff[8] * z * z;
                double bias = 1.0 + params.bias_field_amplitude * poly;
                double base = params.intensity_means[label.at(h, w, d)];
                vol.at(h, w, d) = base * bias + params.noise_sigma * inten.normal();
            }

    PhantomSample sample;
    sample.volume = core::minmax_normalize(vol);
    sample.label = std::move(label);
    sample.seed = seed;
    sample.has_tumor = has_tumor;
    return sample;
}

orch::DatasetManifest generate_phantom_dataset(int64_t count, uint64_t base_seed,
                                               const PhantomParams& params,
                                               std::array<int64_t, 3> splits,
                                               const std::filesystem::path& out_dir) {
    require(count > 0, Error::Kind::validation, "generate_phantom_dataset: count must be > 0");
    require(splits[0] + splits[1] + splits[2] == count, Error::Kind::validation,
            "generate_phantom_dataset: split counts must sum to count");

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "data", ec);
    require(!ec, Error::Kind::io,
            "generate_phantom_dataset: cannot create " + (out_dir / "data").string());

    orch::DatasetManifest manifest;
    for (int64_t i = 0; i < count; ++i) {
        PhantomSample sample = generate_phantom(base_seed + static_cast<uint64_t>(i), params);
        char id[32];
        std::snprintf(id, sizeof(id), "phantom_%04lld", static_cast<long long>(i));
        std::string vol_rel = std::string("data/") + id + "_vol.fvol";
        std::string lab_rel = std::string("data/") + id + "_lab.fvol";
        try {
            orch::write_volume(out_dir / vol_rel, sample.volume);
            orch::write_label(out_dir / lab_rel, sample.label);
        } catch (const Error& e) {
            raise(Error::Kind::io, std::string("generate_phantom_dataset: ") + e.what());
        }

        orch::ManifestRecord rec;
        rec.id = id;
        rec.volume_path = vol_rel;
        rec.label_path = lab_rel;
        rec.provenance = orch::Provenance::phantom;
        rec.split = i < splits[0] ? orch::Split::train
                   : i < splits[0] + splits[1] ? orch::Split::val
                                               : orch::Split::test;
        rec.flags["has_tumor"] = sample.has_tumor;
        manifest.records.push_back(std::move(rec));
    }
    manifest.save(out_dir / "manifest.json");
    return manifest;
}

}  // namespace voxsyn::phantom
