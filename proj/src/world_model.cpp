// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "openviga/errors.hpp"

namespace F = torch::nn::functional;

namespace openviga::wm {

// --- text -------------------------------------------------------------------------------

std::vector<std::int32_t> ByteCodec::encode(const std::string& text) const {
    std::vector<std::int32_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(c);
    return ids;
}

std::vector<std::int32_t> frame_text_prompt(const std::string& prompt, const TextCodec& codec) {
    auto ids = codec.encode(prompt);
    for (auto id : ids) {
        if (id < 0 || id >= codec.vocab_size()) {
            throw ConfigError("text codec '" + codec.name() + "' produced out-of-range id " + std::to_string(id));
        }
    }
    return ids;
}

// --- framing ------------------------------------------------------------------------------

std::vector<std::int32_t> frame_indices(std::span<const IndexGrid> grids) {
    std::vector<std::int32_t> out;
    if (grids.empty()) return out;
    const std::size_t n = grids[0].size();
    out.reserve(grids.size() * (n + 1));
    for (const auto& g : grids) {
        if (g.size() != n) throw DimensionError("all index grids must have the same number of entries");
        for (auto idx : g.indices) {
            if (idx < 0) throw ParameterError("negative codebook index");
            out.push_back(idx + 1);
        }
        out.push_back(kEndOfImage);
    }
    return out;
}

UnframeResult unframe_indices(std::span<const std::int32_t> sequence, int grid_height, int grid_width,
                              UnframeMode mode) {
    const std::size_t n = static_cast<std::size_t>(grid_height) * grid_width;
    const std::size_t stride = n + 1;
    if (n == 0) throw DimensionError("grid must have at least one entry");
    UnframeResult result;
    const bool strict = mode == UnframeMode::kStrict;
    if (strict && sequence.size() % stride != 0) {
        throw StructuralError("sequence length " + std::to_string(sequence.size()) + " is not a multiple of " +
                                  std::to_string(stride),
                              static_cast<long>(sequence.size()));
    }
    const std::size_t frames = (sequence.size() + stride - 1) / stride;
    for (std::size_t f = 0; f < frames; ++f) {
        IndexGrid grid{grid_height, grid_width, std::vector<std::int32_t>(n, 0)};
        for (std::size_t i = 0; i < stride; ++i) {
            const std::size_t p = f * stride + i;  // 0-based
            const long position = static_cast<long>(p + 1);
            const bool marker_slot = i == n;
            if (p >= sequence.size()) {
                // lenient only: truncated final block
                result.repairs += 1;
                continue;
            }
            const auto token = sequence[p];
            if (marker_slot) {
                if (token != kEndOfImage) {
                    if (strict) {
                        throw StructuralError("missing end-of-image marker at position " + std::to_string(position),
                                              position);
                    }
                    result.repairs += 1;
                }
            } else if (token == kEndOfImage) {
                if (strict) {
                    throw StructuralError("end-of-image marker inside a frame block at position " +
                                              std::to_string(position),
                                          position);
                }
                result.repairs += 1;
                grid.indices[i] = 0;
            } else {
                grid.indices[i] = token - 1;
            }
        }
        result.grids.push_back(std::move(grid));
    }
    return result;
}

FramedSequence frame_sequence(std::vector<std::int32_t> text, std::span<const IndexGrid> grids) {
    FramedSequence s;
    s.text = std::move(text);
    s.image = frame_indices(grids);
    s.frame_count = static_cast<int>(grids.size());
    s.tokens_per_frame = grids.empty() ? 0 : static_cast<int>(grids[0].size());
    return s;
}

// --- layers ----------------------------------------------------------------------------------

namespace {

void check_rank(const LoraConfig& lora, int a, int b, const char* what) {
    if (lora.rank < 1 || lora.rank >= std::min(a, b)) {
        throw ConfigError(std::string("LoRA rank ") + std::to_string(lora.rank) + " invalid for " + what + " [" +
                          std::to_string(a) + " x " + std::to_string(b) + "]");
    }
}

torch::Tensor rotate(const torch::Tensor& x, const torch::Tensor& cos, const torch::Tensor& sin) {
    // x: [B, H, S, Dh]; cos/sin: [S, Dh/2]
    const auto half = x.size(-1) / 2;
    const auto x1 = x.narrow(-1, 0, half);
    const auto x2 = x.narrow(-1, half, half);
    return torch::cat({x1 * cos - x2 * sin, x1 * sin + x2 * cos}, -1);
}

}  // namespace

LoraLinearImpl::LoraLinearImpl(int in_features, int out_features, const LoraConfig& lora) {
    weight = register_parameter("weight", torch::randn({out_features, in_features}) * 0.02);
    if (lora.enabled && lora.linear) {
        check_rank(lora, in_features, out_features, "linear layer");
        auto a = torch::empty({lora.rank, in_features});
        torch::nn::init::kaiming_uniform_(a, std::sqrt(5.0));
        lora_a = register_parameter("lora_a", a);
        lora_b = register_parameter("lora_b", torch::zeros({out_features, lora.rank}));
        scale_ = lora.alpha / lora.rank;
    }
}

torch::Tensor LoraLinearImpl::forward(const torch::Tensor& x) {
    auto y = F::linear(x, weight.to(x.scalar_type()));
    if (adapted()) y = y + scale_ * F::linear(F::linear(x, lora_a), lora_b);
    return y;
}

LoraEmbeddingImpl::LoraEmbeddingImpl(int vocab, int dim, const LoraConfig& lora) {
    weight = register_parameter("weight", torch::randn({vocab, dim}) * 0.02);
    if (lora.enabled && lora.embedding) {
        check_rank(lora, vocab, dim, "embedding");
        lora_a = register_parameter("lora_a", torch::randn({vocab, lora.rank}) / std::sqrt(double(lora.rank)));
        lora_b = register_parameter("lora_b", torch::zeros({lora.rank, dim}));
        scale_ = lora.alpha / lora.rank;
    }
}

torch::Tensor LoraEmbeddingImpl::forward(const torch::Tensor& ids) {
    auto y = F::embedding(ids, weight).to(torch::kFloat32);
    if (adapted()) y = y + scale_ * F::embedding(ids, lora_a).matmul(lora_b);
    return y;
}

RMSNormImpl::RMSNormImpl(int dim, double eps) : eps_(eps) {
    weight = register_parameter("weight", torch::ones({dim}));
}

torch::Tensor RMSNormImpl::forward(const torch::Tensor& x) {
    return x * torch::rsqrt(x.pow(2).mean(-1, true) + eps_) * weight;
}

BlockImpl::BlockImpl(const WorldModelConfig& c) : heads_(c.heads), head_dim_(c.model_dim / c.heads) {
    const int d = c.model_dim;
    attn_norm = register_module("attn_norm", RMSNorm(d, c.norm_eps));
    wq = register_module("wq", LoraLinear(d, d, c.lora));
    wk = register_module("wk", LoraLinear(d, d, c.lora));
    wv = register_module("wv", LoraLinear(d, d, c.lora));
    wo = register_module("wo", LoraLinear(d, d, c.lora));
    ffn_norm = register_module("ffn_norm", RMSNorm(d, c.norm_eps));
    w_gate = register_module("w_gate", LoraLinear(d, c.ffn_dim, c.lora));
    w_up = register_module("w_up", LoraLinear(d, c.ffn_dim, c.lora));
    w_down = register_module("w_down", LoraLinear(c.ffn_dim, d, c.lora));
    torch::NoGradGuard guard;
    const double out_scale = 1.0 / std::sqrt(2.0 * c.depth);
    wo->weight.mul_(out_scale);
    w_down->weight.mul_(out_scale);
}

torch::Tensor BlockImpl::forward(const torch::Tensor& x, int64_t start, const torch::Tensor& cos,
                                 const torch::Tensor& sin, torch::Tensor* cache_k, torch::Tensor* cache_v) {
    const auto b = x.size(0), s = x.size(1);
    auto h = attn_norm(x);
    auto split = [&](const torch::Tensor& t) { return t.view({b, s, heads_, head_dim_}).transpose(1, 2); };
    auto q = rotate(split(wq(h)), cos, sin);
    auto k = rotate(split(wk(h)), cos, sin);
    auto v = split(wv(h));
    if (cache_k) {
        if (cache_k->defined()) {
            k = torch::cat({*cache_k, k}, 2);
            v = torch::cat({*cache_v, v}, 2);
        }
        *cache_k = k;
        *cache_v = v;
    }
    const auto keys = k.size(2);
    auto scores = q.matmul(k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim_));
    const auto query_pos = torch::arange(start, start + s, torch::kInt64).unsqueeze(1);
    const auto key_pos = torch::arange(keys, torch::kInt64).unsqueeze(0);
    scores = scores.masked_fill(key_pos > query_pos, -std::numeric_limits<float>::infinity());
    auto attn = torch::softmax(scores, -1).matmul(v).transpose(1, 2).reshape({b, s, heads_ * head_dim_});
    auto out = x + wo(attn);
    h = ffn_norm(out);
    return out + w_down(torch::silu(w_gate(h)) * w_up(h));
}

// --- model ----------------------------------------------------------------------------------

WorldModelImpl::WorldModelImpl(WorldModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& c = config_;
    text_embedding = register_module("text_embedding", LoraEmbedding(c.text_vocab, c.model_dim, c.lora));
    image_embedding = register_module("image_embedding", LoraEmbedding(c.image_vocab, c.model_dim, c.lora));
    for (int i = 0; i < c.depth; ++i) blocks->push_back(Block(c));
    register_module("blocks", blocks);
    norm_out = register_module("norm_out", RMSNorm(c.model_dim, c.norm_eps));
    head = register_module("head", LoraLinear(c.model_dim, c.image_vocab, c.lora));

    if (c.lora.enabled) {
        torch::NoGradGuard guard;
        for (auto& item : named_parameters(true)) {
            const bool trainable =
                item.key().find("lora_") != std::string::npos || item.key().find("norm") != std::string::npos;
            if (!trainable && c.frozen_bfloat16) item.value().set_data(item.value().to(torch::kBFloat16));
            item.value().set_requires_grad(trainable);
        }
    }

    const int64_t half = c.model_dim / c.heads / 2;
    auto inv = torch::pow(c.rope_theta, -torch::arange(half, torch::kFloat64) / static_cast<double>(half));
    auto angles = torch::arange(c.context_length, torch::kFloat64).unsqueeze(1) * inv.unsqueeze(0);
    rope_cos_ = angles.cos().to(torch::kFloat32);
    rope_sin_ = angles.sin().to(torch::kFloat32);
}

torch::Tensor WorldModelImpl::embed(const torch::Tensor& tokens) {
    const auto& c = config_;
    if (tokens.numel() > 0) {
        const auto lo = tokens.min().item<int64_t>();
        const auto hi = tokens.max().item<int64_t>();
        if (lo < 0 || hi >= c.text_vocab + c.image_vocab) throw ParameterError("token id out of range");
    }
    const auto is_image = tokens >= c.text_vocab;
    const auto text_ids = torch::where(is_image, torch::zeros_like(tokens), tokens);
    const auto image_ids = torch::where(is_image, tokens - c.text_vocab, torch::zeros_like(tokens));
    return torch::where(is_image.unsqueeze(-1), image_embedding->forward(image_ids), text_embedding->forward(text_ids));
}

torch::Tensor WorldModelImpl::run(const torch::Tensor& tokens, int64_t start, KVCache* cache) {
    if (tokens.dim() != 2) throw DimensionError("world model expects [B, L] token ids");
    const int64_t end = start + tokens.size(1);
    if (end > config_.context_length) {
        throw LengthError("sequence length " + std::to_string(end) + " exceeds context length " +
                          std::to_string(config_.context_length));
    }
    const auto cos = rope_cos_.slice(0, start, end);
    const auto sin = rope_sin_.slice(0, start, end);
    auto h = embed(tokens.to(torch::kInt64));
    if (cache && cache->keys.empty()) {
        cache->keys.resize(blocks->size());
        cache->values.resize(blocks->size());
    }
    for (std::size_t i = 0; i < blocks->size(); ++i) {
        auto* block = (*blocks)[i]->as<BlockImpl>();
        h = block->forward(h, start, cos, sin, cache ? &cache->keys[i] : nullptr,
                           cache ? &cache->values[i] : nullptr);
    }
    if (cache) cache->length = end;
    return head(norm_out(h));
}

torch::Tensor WorldModelImpl::forward(const torch::Tensor& tokens) { return run(tokens, 0, nullptr); }

torch::Tensor WorldModelImpl::forward_cached(const torch::Tensor& tokens, KVCache& cache) {
    return run(tokens, cache.length, &cache);
}

torch::Tensor WorldModelImpl::join(std::span<const std::int32_t> text, const torch::Tensor& image) const {
    if (image.dim() != 2) throw DimensionError("image tokens must be [B, L]");
    const auto b = image.size(0);
    std::vector<int64_t> prefix{config_.bos_id()};
    for (auto t : text) {
        if (t < 0 || t >= config_.bos_id()) throw ParameterError("text id out of range");
        prefix.push_back(t);
    }
    auto head_ids = torch::tensor(prefix, torch::kInt64).unsqueeze(0).expand({b, -1});
    return torch::cat({head_ids, image.to(torch::kInt64) + config_.text_vocab}, 1);
}

torch::Tensor WorldModelImpl::image_logits(std::span<const std::int32_t> text, const torch::Tensor& image) {
    // drop the last image token: nothing is predicted from it
    const auto inputs = join(text, image.narrow(1, 0, image.size(1) - 1));
    const auto logits = forward(inputs);
    return logits.narrow(1, static_cast<int64_t>(text.size()), image.size(1));
}

std::vector<torch::Tensor> WorldModelImpl::trainable_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : parameters(true)) {
        if (p.requires_grad()) out.push_back(p);
    }
    return out;
}

std::vector<std::string> WorldModelImpl::frozen_parameter_names() const {
    std::vector<std::string> out;
    for (const auto& item : named_parameters(true)) {
        if (!item.value().requires_grad()) out.push_back(item.key());
    }
    return out;
}

ParameterReport WorldModelImpl::parameter_report() const {
    ParameterReport r;
    for (const auto& item : named_parameters(true)) {
        const auto n = item.value().numel();
        r.total += n;
        if (item.value().requires_grad()) r.trainable += n;
        if (item.key().find("lora_") != std::string::npos) r.adapter += n;
        if (item.key().find("norm") != std::string::npos) r.norm += n;
    }
    return r;
}

ParameterReport analytic_parameter_report(const WorldModelConfig& c) {
    const int64_t d = c.model_dim, f = c.ffn_dim, v = c.text_vocab, k = c.image_vocab, r = c.lora.rank;
    const int64_t base = v * d + k * d + c.depth * (4 * d * d + 3 * d * f) + d * k;
    ParameterReport report;
    report.norm = c.depth * 2 * d + d;
    if (c.lora.enabled) {
        if (c.lora.linear) report.adapter += c.depth * (4 * r * 2 * d + 3 * r * (d + f)) + r * (d + k);
        if (c.lora.embedding) report.adapter += r * (v + d) + r * (k + d);
    }
    report.total = base + report.norm + report.adapter;
    report.trainable = c.lora.enabled ? report.adapter + report.norm : report.total;
    return report;
}

torch::Tensor wm_ce_loss(const torch::Tensor& logits, const torch::Tensor& targets) {
    if (logits.dim() != targets.dim() + 1 || !logits.sizes().slice(0, targets.dim()).equals(targets.sizes())) {
        throw DimensionError("wm_ce_loss: logits and targets do not line up");
    }
    const auto logp = torch::log_softmax(logits, -1).clamp_min(std::log(1e-12));
    return -logp.gather(-1, targets.to(torch::kInt64).unsqueeze(-1)).mean();
}

double top1_accuracy(const torch::Tensor& logits, const torch::Tensor& targets) {
    torch::NoGradGuard guard;
    return logits.argmax(-1).eq(targets.to(torch::kInt64)).to(torch::kFloat64).mean().item<double>();
}

// --- sampling --------------------------------------------------------------------------------

int top_k_sample(std::span<const double> row, int k, std::mt19937_64& rng) {
    if (k < 1 || static_cast<std::size_t>(k) > row.size()) {
        throw ParameterError("top-k " + std::to_string(k) + " outside [1, " + std::to_string(row.size()) + "]");
    }
    std::vector<int> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row[a] > row[b]; });
    if (k == 1) return order[0];
    double mass = 0.0;
    for (int i = 0; i < k; ++i) mass += row[order[i]];
    if (!(mass > 0.0)) return order[0];
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * mass;
    double cumulative = 0.0;
    for (int i = 0; i < k; ++i) {
        cumulative += row[order[i]];
        if (u < cumulative) return order[i];
    }
    for (int i = k - 1; i > 0; --i) {
        if (row[order[i]] > 0.0) return order[i];
    }
    return order[0];
}

GenerationResult generate(WorldModel& model, const GenerationRequest& request) {
    const auto& c = model->config();
    if (request.initial.empty()) throw ParameterError("generation needs at least one initial frame");
    if (request.predicted_frames < 1) throw ParameterError("predicted_frames must be >= 1");
    const int n = c.tokens_per_frame;
    const int stride = n + 1;
    for (const auto& g : request.initial) {
        if (static_cast<int>(g.size()) != n) throw DimensionError("initial grid size does not match tokens_per_frame");
    }
    const int64_t steps = static_cast<int64_t>(request.predicted_frames) * stride;
    const int64_t prefix = 1 + static_cast<int64_t>(request.text.size()) +
                           static_cast<int64_t>(request.initial.size()) * stride;
    // the last sampled token is never fed back
    if (prefix + steps - 1 > c.context_length) {
        throw LengthError("generation needs " + std::to_string(prefix + steps - 1) + " positions, context is " +
                          std::to_string(c.context_length));
    }

    torch::NoGradGuard guard;
    const bool was_training = model->is_training();
    model->eval();
    std::mt19937_64 rng(request.seed);
    const auto framed = frame_indices(request.initial);
    auto ids = model->join(request.text, torch::tensor(std::vector<int64_t>(framed.begin(), framed.end()),
                                                       torch::kInt64)
                                             .unsqueeze(0));
    KVCache cache;
    torch::Tensor last = request.use_cache ? model->forward_cached(ids, cache).select(1, -1)[0]
                                           : model->forward(ids).select(1, -1)[0];

    GenerationResult result;
    result.sampled.reserve(steps);
    for (int64_t it = 0; it < steps; ++it) {
        std::int32_t token;
        if (request.structure_mode == StructureMode::kForced && (it + 1) % stride == 0) {
            token = kEndOfImage;
        } else {
            auto probs = torch::softmax(last.to(torch::kFloat64), -1).contiguous();
            // forced blocks never carry an in-block marker
            if (request.structure_mode == StructureMode::kForced) probs[kEndOfImage] = 0.0;
            std::span<const double> row(probs.data_ptr<double>(), static_cast<std::size_t>(probs.numel()));
            token = top_k_sample(row, request.top_k, rng);
        }
        result.sampled.push_back(token);
        ++result.iterations;
        if (it + 1 == steps) break;
        const auto next = torch::full({1, 1}, static_cast<int64_t>(token) + c.text_vocab, torch::kInt64);
        if (request.use_cache) {
            if (cache.length + 1 > c.context_length) throw LengthError("context overflow during generation");
            last = model->forward_cached(next, cache).select(1, -1)[0];
        } else {
            ids = torch::cat({ids, next}, 1);
            last = model->forward(ids).select(1, -1)[0];
        }
    }
    if (was_training) model->train();

    const auto& g0 = request.initial.front();
    const auto mode = request.structure_mode == StructureMode::kForced ? UnframeMode::kStrict : UnframeMode::kLenient;
    auto parsed = unframe_indices(result.sampled, g0.height, g0.width, mode);
    result.grids = std::move(parsed.grids);
    result.repairs = parsed.repairs;
    return result;
}

}  // namespace openviga::wm
