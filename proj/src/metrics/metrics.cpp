// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/metrics/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "voxsyn/util/rng.hpp"

namespace voxsyn::metrics {

double dice_coefficient(const core::LabelMap& a, const core::LabelMap& b, int class_id) {
    require(a.shape == b.shape, Error::Kind::shape, "dice_coefficient: shape mismatch");
    int64_t na = 0, nb = 0, overlap = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        bool ia = a.data[i] == class_id;
        bool ib = b.data[i] == class_id;
        na += ia;
        nb += ib;
        overlap += ia && ib;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(overlap) / static_cast<double>(na + nb);
}

double foreground_mean_dice(const core::LabelMap& a, const core::LabelMap& b) {
    require(a.num_classes == b.num_classes, Error::Kind::shape,
            "foreground_mean_dice: class count mismatch");
    double acc = 0;
    for (int c = 1; c < a.num_classes; ++c) acc += dice_coefficient(a, b, c);
    return acc / static_cast<double>(a.num_classes - 1);
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

namespace {

struct Slice2d {
    int64_t rows = 0, cols = 0;
    std::vector<double> data;  // row-major
    double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
};

Slice2d take_slice(const core::Volume& v, SliceAxis axis, int64_t index) {
    const auto& s = v.shape;
    Slice2d out;
    switch (axis) {
        case SliceAxis::axial:  // fixed depth -> (H, W)
            out.rows = s.height;
            out.cols = s.width;
            out.data.resize(static_cast<size_t>(out.rows * out.cols));
            for (int64_t h = 0; h < s.height; ++h)
                for (int64_t w = 0; w < s.width; ++w)
                    out.data[static_cast<size_t>(h * out.cols + w)] = v.at(h, w, index);
            break;
        case SliceAxis::sagittal:  // fixed width -> (H, D)
            out.rows = s.height;
            out.cols = s.depth;
            out.data.resize(static_cast<size_t>(out.rows * out.cols));
            for (int64_t h = 0; h < s.height; ++h)
                for (int64_t d = 0; d < s.depth; ++d)
                    out.data[static_cast<size_t>(h * out.cols + d)] = v.at(h, index, d);
            break;
        default:  // coronal: fixed height -> (W, D)
            out.rows = s.width;
            out.cols = s.depth;
            out.data.resize(static_cast<size_t>(out.rows * out.cols));
            for (int64_t w = 0; w < s.width; ++w)
                for (int64_t d = 0; d < s.depth; ++d)
                    out.data[static_cast<size_t>(w * out.cols + d)] = v.at(index, w, d);
            break;
    }
    return out;
}

int64_t slice_count(const core::VolumeShape& s, SliceAxis axis) {
    switch (axis) {
        case SliceAxis::axial: return s.depth;
        case SliceAxis::sagittal: return s.width;
        default: return s.height;
    }
}

Slice2d resize_bilinear(const Slice2d& in, int64_t rows, int64_t cols) {
    Slice2d out;
    out.rows = rows;
    out.cols = cols;
    out.data.resize(static_cast<size_t>(rows * cols));
    for (int64_t r = 0; r < rows; ++r) {
        double src_r = rows > 1 ? static_cast<double>(r) * (in.rows - 1) / (rows - 1) : 0.0;
        int64_t r0 = static_cast<int64_t>(std::floor(src_r));
        int64_t r1 = std::min(r0 + 1, in.rows - 1);
        double fr = src_r - static_cast<double>(r0);
        for (int64_t c = 0; c < cols; ++c) {
            double src_c = cols > 1 ? static_cast<double>(c) * (in.cols - 1) / (cols - 1) : 0.0;
            int64_t c0 = static_cast<int64_t>(std::floor(src_c));
            int64_t c1 = std::min(c0 + 1, in.cols - 1);
            double fc = src_c - static_cast<double>(c0);
            double v = (1 - fr) * ((1 - fc) * in.at(r0, c0) + fc * in.at(r0, c1)) +
                       fr * ((1 - fc) * in.at(r1, c0) + fc * in.at(r1, c1));
            out.data[static_cast<size_t>(r * cols + c)] = v;
        }
    }
    return out;
}

struct Extractor {
    // conv weights [cout][cin][3][3], biases zero
    std::vector<double> w1, w2, w3, fc;
    static constexpr int64_t kC1 = 8, kC2 = 16, kC3 = 32;
    int64_t output_dim;

    explicit Extractor(const FeatureExtractorSpec& spec) : output_dim(spec.output_dim) {
        Rng rng(derive_seed(spec.seed, {0x66656174ull}));
        auto fill = [&](std::vector<double>& w, int64_t cout, int64_t cin, int64_t k) {
            w.resize(static_cast<size_t>(cout * cin * k * k));
            double std = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
            for (auto& x : w) x = rng.normal() * std;
        };
        fill(w1, kC1, 1, 3);
        fill(w2, kC2, kC1, 3);
        fill(w3, kC3, kC2, 3);
        fill(fc, output_dim, kC3, 1);
    }

    // conv3x3 stride 2 pad 1 + relu
    static std::vector<double> conv_s2(const std::vector<double>& x, int64_t cin,
                                       int64_t rows, int64_t cols,
                                       const std::vector<double>& w, int64_t cout,
                                       int64_t& orows, int64_t& ocols) {
        orows = (rows + 2 - 3) / 2 + 1;
        ocols = (cols + 2 - 3) / 2 + 1;
        std::vector<double> out(static_cast<size_t>(cout * orows * ocols), 0.0);
        for (int64_t co = 0; co < cout; ++co)
            for (int64_t orr = 0; orr < orows; ++orr)
                for (int64_t occ = 0; occ < ocols; ++occ) {
                    double acc = 0;
                    for (int64_t ci = 0; ci < cin; ++ci)
                        for (int64_t kr = 0; kr < 3; ++kr)
                            for (int64_t kc = 0; kc < 3; ++kc) {
                                int64_t ir = orr * 2 + kr - 1;
                                int64_t ic = occ * 2 + kc - 1;
                                if (ir < 0 || ir >= rows || ic < 0 || ic >= cols) continue;
                                acc += x[static_cast<size_t>((ci * rows + ir) * cols + ic)] *
                                       w[static_cast<size_t>(((co * cin + ci) * 3 + kr) * 3 + kc)];
                            }
                    out[static_cast<size_t>((co * orows + orr) * ocols + occ)] =
                        acc > 0 ? acc : 0;
                }
        return out;
    }

    std::vector<double> features(const Slice2d& slice) const {
        int64_t r = slice.rows, c = slice.cols, orr, occ;
        auto h1 = conv_s2(slice.data, 1, r, c, w1, kC1, orr, occ);
        r = orr; c = occ;
        auto h2 = conv_s2(h1, kC1, r, c, w2, kC2, orr, occ);
        r = orr; c = occ;
        auto h3 = conv_s2(h2, kC2, r, c, w3, kC3, orr, occ);
        r = orr; c = occ;
        // global average pool
        std::vector<double> pooled(kC3, 0.0);
        for (int64_t ch = 0; ch < kC3; ++ch) {
            double acc = 0;
            for (int64_t i = 0; i < r * c; ++i) acc += h3[static_cast<size_t>(ch * r * c + i)];
            pooled[static_cast<size_t>(ch)] = acc / static_cast<double>(r * c);
        }
        std::vector<double> out(static_cast<size_t>(output_dim), 0.0);
        for (int64_t o = 0; o < output_dim; ++o) {
            double acc = 0;
            for (int64_t i = 0; i < kC3; ++i)
                acc += fc[static_cast<size_t>(o * kC3 + i)] * pooled[static_cast<size_t>(i)];
            out[static_cast<size_t>(o)] = acc;
        }
        return out;
    }
};

}  // namespace

void GaussianStats::validate() const {
    require(dim >= 1 && static_cast<int64_t>(mean.size()) == dim &&
                static_cast<int64_t>(covariance.size()) == dim * dim,
            Error::Kind::shape, "GaussianStats: inconsistent dimensions");
    require(sample_count >= 1, Error::Kind::validation,
            "GaussianStats: sample_count must be >= 1");
    for (int64_t i = 0; i < dim; ++i)
        for (int64_t j = 0; j < i; ++j)
            require(std::abs(covariance[static_cast<size_t>(i * dim + j)] -
                             covariance[static_cast<size_t>(j * dim + i)]) <= 1e-8,
                    Error::Kind::validation, "GaussianStats: covariance not symmetric");
}

GaussianStats extract_slice_features(const std::vector<core::Volume>& volumes,
                                     SliceAxis axis, const FeatureExtractorSpec& spec) {
    require(volumes.size() >= 2, Error::Kind::validation,
            "extract_slice_features: need at least 2 volumes");
    Extractor extractor(spec);

    std::vector<std::vector<double>> features;
    for (const auto& v : volumes) {
        int64_t n = slice_count(v.shape, axis);
        require(n >= 1, Error::Kind::validation, "extract_slice_features: empty axis");
        for (int64_t i = 0; i < n; ++i) {
            Slice2d slice = resize_bilinear(take_slice(v, axis, i),
                                            spec.input_slice_size[0],
                                            spec.input_slice_size[1]);
            features.push_back(extractor.features(slice));
        }
    }
    int64_t n = static_cast<int64_t>(features.size());
    require(n >= 2, Error::Kind::validation,
            "extract_slice_features: need at least 2 slices for a covariance");

    int64_t d = spec.output_dim;
    GaussianStats stats;
    stats.dim = d;
    stats.sample_count = n;
    stats.mean.assign(static_cast<size_t>(d), 0.0);
    for (const auto& f : features)
        for (int64_t i = 0; i < d; ++i) stats.mean[static_cast<size_t>(i)] += f[static_cast<size_t>(i)];
    for (auto& m : stats.mean) m /= static_cast<double>(n);

    stats.covariance.assign(static_cast<size_t>(d * d), 0.0);
    for (const auto& f : features)
        for (int64_t i = 0; i < d; ++i) {
            double di = f[static_cast<size_t>(i)] - stats.mean[static_cast<size_t>(i)];
            for (int64_t j = i; j < d; ++j) {
                double dj = f[static_cast<size_t>(j)] - stats.mean[static_cast<size_t>(j)];
                stats.covariance[static_cast<size_t>(i * d + j)] += di * dj;
            }
        }
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = i; j < d; ++j) {
            double v = stats.covariance[static_cast<size_t>(i * d + j)] /
                       static_cast<double>(n - 1);
            stats.covariance[static_cast<size_t>(i * d + j)] = v;
            stats.covariance[static_cast<size_t>(j * d + i)] = v;
        }
    return stats;
}

namespace {

constexpr double kEigTolerance = 1e-6;

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    require(es.info() == Eigen::Success, Error::Kind::numeric,
            std::string("frechet_distance: eigendecomposition failed for ") + what);
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
        require(ev[i] >= -kEigTolerance, Error::Kind::numeric,
                std::string("frechet_distance: matrix not PSD beyond tolerance in ") + what);
        if (ev[i] < 0) ev[i] = 0;
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& s1, const GaussianStats& s2) {
    s1.validate();
    s2.validate();
    require(s1.dim == s2.dim, Error::Kind::shape, "frechet_distance: dimension mismatch");
    const int64_t d = s1.dim;

    double mean_term = 0;
    for (int64_t i = 0; i < d; ++i) {
        double diff = s1.mean[static_cast<size_t>(i)] - s2.mean[static_cast<size_t>(i)];
        mean_term += diff * diff;
    }

    Eigen::Map<const Eigen::MatrixXd> c1(s1.covariance.data(), d, d);
    Eigen::Map<const Eigen::MatrixXd> c2(s2.covariance.data(), d, d);

    Eigen::MatrixXd root1 = psd_sqrt(c1, "covariance 1");
    Eigen::MatrixXd inner = root1 * c2 * root1;
    inner = 0.5 * (inner + inner.transpose());  // symmetrize numerical residue

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    require(es.info() == Eigen::Success, Error::Kind::numeric,
            "frechet_distance: eigendecomposition failed for the product term");
    double trace_sqrt = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        double ev = es.eigenvalues()[i];
        require(ev >= -kEigTolerance, Error::Kind::numeric,
                "frechet_distance: product term not PSD beyond tolerance");
        trace_sqrt += std::sqrt(std::max(0.0, ev));
    }

    double value = mean_term + c1.trace() + c2.trace() - 2.0 * trace_sqrt;
    require(value >= -kEigTolerance, Error::Kind::numeric,
            "frechet_distance: negative distance beyond tolerance");
    return std::max(0.0, value);
}

FidReport fid_report(const std::vector<core::Volume>& real,
                     const std::vector<core::Volume>& synthetic,
                     const FeatureExtractorSpec& spec) {
    FidReport report;
    auto fid_for = [&](SliceAxis axis) {
        return frechet_distance(extract_slice_features(real, axis, spec),
                                extract_slice_features(synthetic, axis, spec));
    };
    report.axial = fid_for(SliceAxis::axial);
    report.sagittal = fid_for(SliceAxis::sagittal);
    report.coronal = fid_for(SliceAxis::coronal);
    report.average = (report.axial + report.sagittal + report.coronal) / 3.0;
    return report;
}

std::vector<double> extract_features_for_test(const core::Volume& v, SliceAxis axis,
                                              int64_t slice_index,
                                              const FeatureExtractorSpec& spec) {
    Extractor extractor(spec);
    Slice2d slice = resize_bilinear(take_slice(v, axis, slice_index),
                                    spec.input_slice_size[0], spec.input_slice_size[1]);
    return extractor.features(slice);
}

}  // namespace voxsyn::metrics
