// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/eval_metrics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "openviga/log.hpp"
#include "openviga/tensor_utils.hpp"

namespace openviga::metrics {

namespace {

constexpr double kPsnrCap = 99.0;

void require_same_size(const data::RawFrame& a, const data::RawFrame& b) {
    if (a.height != b.height || a.width != b.width) {
        throw DimensionError("frames differ in size: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                             " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

// One channel as a row-major double plane.
struct Plane {
    int height = 0;
    int width = 0;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

std::vector<Plane> planes_of(const data::RawFrame& f) {
    std::vector<Plane> out(3, Plane{f.height, f.width, std::vector<double>(static_cast<std::size_t>(f.height) * f.width)});
    for (int y = 0; y < f.height; ++y) {
        for (int x = 0; x < f.width; ++x) {
            for (int c = 0; c < 3; ++c) out[c].v[static_cast<std::size_t>(y) * f.width + x] = f.at(y, x, c);
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(size);
    const double center = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-((i - center) * (i - center)) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable 'valid' filtering.
Plane filter_valid(const Plane& p, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int oh = p.height - n + 1, ow = p.width - n + 1;
    Plane rows{p.height, ow, std::vector<double>(static_cast<std::size_t>(p.height) * ow)};
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * p.at(y, x + i);
            rows.v[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow)};
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * rows.at(y + i, x);
            out.v[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

Plane product(const Plane& a, const Plane& b) {
    Plane out{a.height, a.width, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

struct SsimParts {
    double ssim = 0.0;
    double cs = 0.0;
};

SsimParts ssim_parts(const std::vector<Plane>& a, const std::vector<Plane>& b, const SsimOptions& o) {
    if (a[0].height < o.window || a[0].width < o.window) {
        throw DimensionError("image smaller than the " + std::to_string(o.window) + "-pixel SSIM window");
    }
    const auto k = gaussian_kernel(o.window, o.sigma);
    const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak);
    const double c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
    SsimParts total;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const auto mu_a = filter_valid(a[c], k);
        const auto mu_b = filter_valid(b[c], k);
        const auto aa = filter_valid(product(a[c], a[c]), k);
        const auto bb = filter_valid(product(b[c], b[c]), k);
        const auto ab = filter_valid(product(a[c], b[c]), k);
        double s_sum = 0.0, cs_sum = 0.0;
        for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
            const double ma = mu_a.v[i], mb = mu_b.v[i];
            const double va = aa.v[i] - ma * ma, vb = bb.v[i] - mb * mb, cov = ab.v[i] - ma * mb;
            const double cs = (2.0 * cov + c2) / (va + vb + c2);
            cs_sum += cs;
            s_sum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1) * cs;
        }
        total.ssim += s_sum / static_cast<double>(mu_a.v.size());
        total.cs += cs_sum / static_cast<double>(mu_a.v.size());
    }
    total.ssim /= static_cast<double>(a.size());
    total.cs /= static_cast<double>(a.size());
    return total;
}

Plane downsample(const Plane& p) {
    const int h = p.height / 2, w = p.width / 2;
    Plane out{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.v[static_cast<std::size_t>(y) * w + x] =
                0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
        }
    }
    return out;
}

Eigen::MatrixXd covariance(const FeatureSet& x, const Eigen::RowVectorXd& mean) {
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double trace_sqrt_product(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb) {
    const Eigen::MatrixXd root_a = sqrt_psd(sa);
    const Eigen::MatrixXd m = root_a * sb * root_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

// --- reference metrics ------------------------------------------------------------------

double psnr(const data::RawFrame& a, const data::RawFrame& b) {
    require_same_size(a, b);
    double se = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.pixels.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double psnr(const data::Frame& a, const data::Frame& b) { return psnr(data::denormalize(a), data::denormalize(b)); }

SsimOptions SsimOptions::from_config(const MetricConfig& c) {
    return {c.ssim_window, c.ssim_sigma, c.ssim_k1, c.ssim_k2, 255.0};
}

double ssim(const data::RawFrame& a, const data::RawFrame& b, const SsimOptions& options) {
    require_same_size(a, b);
    return ssim_parts(planes_of(a), planes_of(b), options).ssim;
}

double ssim(const data::Frame& a, const data::Frame& b, const SsimOptions& options) {
    return ssim(data::denormalize(a), data::denormalize(b), options);
}

int ms_ssim_min_size(int scales, int window) { return window << std::max(0, scales - 1); }

double ms_ssim(const data::Frame& a, const data::Frame& b, std::span<const double> weights,
               const SsimOptions& options) {
    if (weights.empty()) throw ConfigError("ms_ssim needs at least one scale weight");
    const auto ra = data::denormalize(a);
    const auto rb = data::denormalize(b);
    require_same_size(ra, rb);
    const int scales = static_cast<int>(weights.size());
    const int min_side = ms_ssim_min_size(scales, options.window);
    if (std::min(ra.height, ra.width) < min_side) {
        throw DimensionError("image side " + std::to_string(std::min(ra.height, ra.width)) + " too small for " +
                             std::to_string(scales) + " MS-SSIM scales (need " + std::to_string(min_side) + ")");
    }
    auto pa = planes_of(ra);
    auto pb = planes_of(rb);
    double result = 1.0;
    for (int s = 0; s < scales; ++s) {
        const auto parts = ssim_parts(pa, pb, options);
        const double base = s + 1 == scales ? parts.ssim : parts.cs;
        result *= std::pow(std::max(base, 0.0), weights[s]);
        if (s + 1 < scales) {
            for (auto& p : pa) p = downsample(p);
            for (auto& p : pb) p = downsample(p);
        }
    }
    return result;
}

double lpips(const data::Frame& a, const data::Frame& b, const loss::FeatureExtractor& phi,
             std::span<const double> layer_weights) {
    const auto layers = phi.layers();
    if (layers.empty()) throw ConfigError("LPIPS feature extractor declares no layers");
    if (layer_weights.size() != layers.size()) {
        throw ConfigError("LPIPS needs one weight per layer (" + std::to_string(layers.size()) + ")");
    }
    torch::NoGradGuard guard;
    const auto fa = phi.features(to_tensor(a).unsqueeze(0));
    const auto fb = phi.features(to_tensor(b).unsqueeze(0));
    double total = 0.0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto xa = fa[l].to(torch::kFloat64);
        const auto xb = fb[l].to(torch::kFloat64);
        const auto na = xa / (xa.pow(2).sum(1, true).sqrt() + 1e-10);
        const auto nb = xb / (xb.pow(2).sum(1, true).sqrt() + 1e-10);
        total += layer_weights[l] * (na - nb).pow(2).sum(1).mean().item<double>();
    }
    return total;
}

// --- distributional ------------------------------------------------------------------------

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.rows() < 2 || b.rows() < 2) throw ParameterError("Frechet distance needs at least 2 samples per set");
    if (a.cols() != b.cols()) throw DimensionError("feature sets differ in dimensionality");
    const Eigen::RowVectorXd mu_a = a.colwise().mean();
    const Eigen::RowVectorXd mu_b = b.colwise().mean();
    Eigen::MatrixXd sa = covariance(a, mu_a);
    Eigen::MatrixXd sb = covariance(b, mu_b);
    // symmetric form: sqrt of S_a^1/2 S_b S_a^1/2 shares its trace with (S_a S_b)^1/2
    double cross = trace_sqrt_product(sa, sb);
    if (!std::isfinite(cross)) {
        log::warn("covariance product not finite; retrying with 1e-6 diagonal jitter");
        const auto eye = Eigen::MatrixXd::Identity(sa.rows(), sa.cols());
        sa += 1e-6 * eye;
        sb += 1e-6 * eye;
        cross = trace_sqrt_product(sa, sb);
    }
    const double value = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * cross;
    return std::max(0.0, value);
}

double cmmd(const FeatureSet& a, const FeatureSet& b, double bandwidth, MmdEstimator estimator) {
    if (a.rows() < 2 || b.rows() < 2) throw ParameterError("MMD needs at least 2 samples per set");
    if (a.cols() != b.cols()) throw DimensionError("feature sets differ in dimensionality");
    if (!(bandwidth > 0.0)) throw ConfigError("MMD bandwidth must be positive");
    const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    auto kernel_mean = [&](const FeatureSet& x, const FeatureSet& y, bool exclude_diagonal) {
        double sum = 0.0;
        long count = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < y.rows(); ++j) {
                if (exclude_diagonal && i == j) continue;
                sum += std::exp(-gamma * (x.row(i) - y.row(j)).squaredNorm());
                ++count;
            }
        }
        return sum / static_cast<double>(count);
    };
    const bool unbiased = estimator == MmdEstimator::kUnbiased;
    return kernel_mean(a, a, unbiased) + kernel_mean(b, b, unbiased) - 2.0 * kernel_mean(a, b, false);
}

RandomImageEmbedder::RandomImageEmbedder(int dim, std::uint64_t seed) : seed_(seed), projection_(dim, 192) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(192.0) * 4.0);
    for (Eigen::Index r = 0; r < projection_.rows(); ++r) {
        for (Eigen::Index c = 0; c < projection_.cols(); ++c) projection_(r, c) = normal(rng);
    }
}

std::string RandomImageEmbedder::name() const {
    return "random-image-" + std::to_string(projection_.rows()) + "-" + std::to_string(seed_);
}

Eigen::VectorXd RandomImageEmbedder::embed(const data::Frame& frame) const {
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(192);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(192);
    const int h = frame.height(), w = frame.width();
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            const int by = y * 8 / h;
            for (int x = 0; x < w; ++x) {
                const int idx = c * 64 + by * 8 + x * 8 / w;
                pooled[idx] += frame.at(c, y, x);
                counts[idx] += 1.0;
            }
        }
    }
    pooled = pooled.cwiseQuotient(counts.cwiseMax(1.0));
    return (projection_ * pooled).array().tanh().matrix();
}

RandomVideoEmbedder::RandomVideoEmbedder(int frame_dim, std::uint64_t seed) : frames_(frame_dim, seed) {}

std::string RandomVideoEmbedder::name() const { return "random-video/" + frames_.name(); }

Eigen::VectorXd RandomVideoEmbedder::embed(std::span<const data::Frame> clip) const {
    if (clip.empty()) throw LengthError("cannot embed an empty clip");
    const int d = frames_.dim();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd motion = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd previous;
    for (std::size_t t = 0; t < clip.size(); ++t) {
        const auto e = frames_.embed(clip[t]);
        mean += e;
        if (t > 0) motion += (e - previous).cwiseAbs();
        previous = e;
    }
    mean /= static_cast<double>(clip.size());
    if (clip.size() > 1) motion /= static_cast<double>(clip.size() - 1);
    Eigen::VectorXd out(2 * d);
    out << mean, motion;
    return out;
}

FeatureSet embed_frames(const ImageEmbedder& embedder, std::span<const data::Frame> frames) {
    FeatureSet out(static_cast<Eigen::Index>(frames.size()), embedder.dim());
    for (std::size_t i = 0; i < frames.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = embedder.embed(frames[i]);
    return out;
}

FeatureSet embed_clips(const VideoEmbedder& embedder, const std::vector<std::vector<data::Frame>>& clips,
                       int frame_count) {
    FeatureSet out(static_cast<Eigen::Index>(clips.size()), embedder.dim());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        if (static_cast<int>(clips[i].size()) < frame_count) {
            throw LengthError("clip " + std::to_string(i) + " has " + std::to_string(clips[i].size()) +
                              " frames, FVD needs " + std::to_string(frame_count));
        }
        out.row(static_cast<Eigen::Index>(i)) =
            embedder.embed(std::span<const data::Frame>(clips[i].data(), static_cast<std::size_t>(frame_count)));
    }
    return out;
}

double fvd(const std::vector<std::vector<data::Frame>>& clips_a, const std::vector<std::vector<data::Frame>>& clips_b,
           const VideoEmbedder& embedder, int frame_count) {
    return frechet_distance(embed_clips(embedder, clips_a, frame_count), embed_clips(embedder, clips_b, frame_count));
}

// --- reports -----------------------------------------------------------------------------------

std::string MetricReport::label() const {
    return frame_count ? metric + "_" + std::to_string(*frame_count) : metric;
}

std::string MetricReport::to_line() const {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "metric=" << metric << " value=" << value;
    if (frame_count) out << " frame_count=" << *frame_count;
    out << " samples=" << samples << " extractor=" << extractor;
    if (!config_hash.empty()) out << " config=" << config_hash;
    if (!variant.empty()) out << " variant=" << variant;
    if (top_k) out << " top_k=" << *top_k;
    return out.str();
}

MetricReport MetricReport::parse_line(const std::string& line) {
    MetricReport r;
    std::istringstream in(line);
    std::string field;
    std::set<std::string> seen;
    while (in >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos || eq == 0) throw ParameterError("malformed report field '" + field + "'");
        const auto key = field.substr(0, eq);
        const auto value = field.substr(eq + 1);
        seen.insert(key);
        try {
            if (key == "metric") r.metric = value;
            else if (key == "value") r.value = std::stod(value);
            else if (key == "frame_count") r.frame_count = std::stoi(value);
            else if (key == "samples") r.samples = std::stol(value);
            else if (key == "extractor") r.extractor = value;
            else if (key == "config") r.config_hash = value;
            else if (key == "variant") r.variant = value;
            else if (key == "top_k") r.top_k = std::stoi(value);
            else throw ParameterError("unknown report key '" + key + "'");
        } catch (const std::logic_error&) {
            throw ParameterError("bad value in report field '" + field + "'");
        }
    }
    if (!seen.count("metric") || !seen.count("value")) throw ParameterError("report line lacks metric or value");
    return r;
}

std::string summary_table(const std::vector<MetricReport>& reports) {
    std::vector<std::string> rows, cols;
    std::map<std::pair<std::string, std::string>, double> cells;
    auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    for (const auto& r : reports) {
        std::string col = r.variant.empty() ? "run" : r.variant;
        if (r.top_k) col += "@k" + std::to_string(*r.top_k);
        add_unique(rows, r.label());
        add_unique(cols, col);
        cells[{r.label(), col}] = r.value;
    }
    std::ostringstream out;
    out << std::left << std::setw(12) << "metric";
    for (const auto& c : cols) out << " " << std::setw(16) << c;
    out << "\n";
    for (const auto& row : rows) {
        out << std::setw(12) << row;
        for (const auto& c : cols) {
            auto it = cells.find({row, c});
            std::ostringstream cell;
            if (it != cells.end()) cell << std::fixed << std::setprecision(4) << it->second;
            else cell << "-";
            out << " " << std::setw(16) << cell.str();
        }
        out << "\n";
    }
    return out.str();
}

void write_report(const std::filesystem::path& path, const std::vector<MetricReport>& reports,
                  const std::vector<std::string>& header) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report " + path.string());
    for (const auto& h : header) out << "# " << h << "\n";
    for (const auto& r : reports) out << r.to_line() << "\n";
    out << "#\n# summary\n";
    std::istringstream table(summary_table(reports));
    std::string line;
    while (std::getline(table, line)) out << "# " << line << "\n";
}

std::vector<MetricReport> read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read report " + path.string());
    std::vector<MetricReport> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(MetricReport::parse_line(line));
    }
    return out;
}

}  // namespace openviga::metrics
