#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fusionnet/graph.hpp"
#include "fusionnet/rng.hpp"
#include "fusionnet/tensor.hpp"

namespace fusionnet {

// FusionNet: two 2-layer conv encoders (IR 1ch, VIS 3ch) -> modality attention
// over the concatenated features -> single-channel alpha head -> convex blend
// of the IR image with the visible luminance. All convs are 3x3, stride 1,
// padding 1, so every stage preserves H x W.

inline constexpr int64_t kKernelSize = 3;
inline constexpr int64_t kPadding = 1;

template <typename T>
struct ConvLayerT {
    TensorT<T> weight; // [Cout, Cin, 3, 3]
    TensorT<T> bias;   // [Cout]

    static ConvLayerT make(int64_t c_out, int64_t c_in) {
        ConvLayerT l;
        l.weight = TensorT<T>({c_out, c_in, kKernelSize, kKernelSize});
        l.bias = TensorT<T>({c_out});
        return l;
    }
    int64_t parameter_count() const { return weight.numel() + bias.numel(); }
};

// Two conv layers, ReLU after each; layer 1 lifts the modality input to C
// channels, layer 2 stays at C.
template <typename T>
struct EncoderParamsT {
    ConvLayerT<T> conv1;
    ConvLayerT<T> conv2;
};

// 2C -> C with ReLU, then C -> C with sigmoid producing the mask A.
template <typename T>
struct AttentionParamsT {
    ConvLayerT<T> conv1;
    ConvLayerT<T> conv2;
};

// C -> C/2 with ReLU, then C/2 -> 1 with sigmoid producing the alpha map.
template <typename T>
struct AlphaHeadParamsT {
    ConvLayerT<T> conv1;
    ConvLayerT<T> conv2;
};

template <typename T>
struct FusionNetParamsT {
    int64_t channels = 64;
    EncoderParamsT<T> encoder_ir;
    EncoderParamsT<T> encoder_vis;
    AttentionParamsT<T> attention;
    AlphaHeadParamsT<T> alpha_head;

    // Canonical (name, tensor) order; checkpoints, Adam states and graph
    // leaves all follow it.
    std::vector<std::pair<std::string, TensorT<T>*>> named_tensors() {
        return {
            {"encoder_ir.conv1.weight", &encoder_ir.conv1.weight},
            {"encoder_ir.conv1.bias", &encoder_ir.conv1.bias},
            {"encoder_ir.conv2.weight", &encoder_ir.conv2.weight},
            {"encoder_ir.conv2.bias", &encoder_ir.conv2.bias},
            {"encoder_vis.conv1.weight", &encoder_vis.conv1.weight},
            {"encoder_vis.conv1.bias", &encoder_vis.conv1.bias},
            {"encoder_vis.conv2.weight", &encoder_vis.conv2.weight},
            {"encoder_vis.conv2.bias", &encoder_vis.conv2.bias},
            {"attention.conv1.weight", &attention.conv1.weight},
            {"attention.conv1.bias", &attention.conv1.bias},
            {"attention.conv2.weight", &attention.conv2.weight},
            {"attention.conv2.bias", &attention.conv2.bias},
            {"alpha_head.conv1.weight", &alpha_head.conv1.weight},
            {"alpha_head.conv1.bias", &alpha_head.conv1.bias},
            {"alpha_head.conv2.weight", &alpha_head.conv2.weight},
            {"alpha_head.conv2.bias", &alpha_head.conv2.bias},
        };
    }
    std::vector<std::pair<std::string, const TensorT<T>*>> named_tensors() const {
        auto mutable_view = const_cast<FusionNetParamsT*>(this)->named_tensors();
        std::vector<std::pair<std::string, const TensorT<T>*>> out;
        out.reserve(mutable_view.size());
        for (auto& [name, tensor] : mutable_view) out.emplace_back(name, tensor);
        return out;
    }

    int64_t parameter_count() const {
        int64_t total = 0;
        for (const auto& [name, tensor] : named_tensors()) total += tensor->numel();
        return total;
    }
};

using FusionNetParams = FusionNetParamsT<float>;

enum class InitScheme { he_xavier, zeros };

namespace detail {

template <typename T>
void init_layer(ConvLayerT<T>& layer, Rng& rng, bool feeds_relu) {
    const int64_t fan_in = layer.weight.extent(1) * kKernelSize * kKernelSize;
    const int64_t fan_out = layer.weight.extent(0) * kKernelSize * kKernelSize;
    if (feeds_relu) {
        // He normal, fan-in scaling.
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (int64_t i = 0; i < layer.weight.numel(); ++i)
            layer.weight[i] = static_cast<T>(rng.normal() * stddev);
    } else {
        // Xavier uniform for the sigmoid-output layers.
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (int64_t i = 0; i < layer.weight.numel(); ++i)
            layer.weight[i] = static_cast<T>(rng.uniform(-limit, limit));
    }
    layer.bias.fill(T(0));
}

} // namespace detail

template <typename T>
FusionNetParamsT<T> make_params(int64_t channels = 64) {
    if (channels < 2 || channels % 2 != 0)
        throw config_error("channel count must be even and >= 2, got " + std::to_string(channels));
    FusionNetParamsT<T> p;
    p.channels = channels;
    p.encoder_ir.conv1 = ConvLayerT<T>::make(channels, 1);
    p.encoder_ir.conv2 = ConvLayerT<T>::make(channels, channels);
    p.encoder_vis.conv1 = ConvLayerT<T>::make(channels, 3);
    p.encoder_vis.conv2 = ConvLayerT<T>::make(channels, channels);
    p.attention.conv1 = ConvLayerT<T>::make(channels, 2 * channels);
    p.attention.conv2 = ConvLayerT<T>::make(channels, channels);
    p.alpha_head.conv1 = ConvLayerT<T>::make(channels / 2, channels);
    p.alpha_head.conv2 = ConvLayerT<T>::make(1, channels / 2);
    return p;
}

template <typename T>
FusionNetParamsT<T> init_params(uint64_t seed, InitScheme scheme, int64_t channels = 64) {
    FusionNetParamsT<T> p = make_params<T>(channels);
    if (scheme == InitScheme::zeros) return p;
    Rng rng(seed);
    detail::init_layer(p.encoder_ir.conv1, rng, true);
    detail::init_layer(p.encoder_ir.conv2, rng, true);
    detail::init_layer(p.encoder_vis.conv1, rng, true);
    detail::init_layer(p.encoder_vis.conv2, rng, true);
    detail::init_layer(p.attention.conv1, rng, true);
    detail::init_layer(p.attention.conv2, rng, false);
    detail::init_layer(p.alpha_head.conv1, rng, true);
    detail::init_layer(p.alpha_head.conv2, rng, false);
    return p;
}

// ---- graph construction ----

template <typename T>
struct ParamLeavesT {
    std::vector<VarT<T>> leaves; // same order as FusionNetParamsT::named_tensors()

    VarT<T> operator[](size_t i) const { return leaves[i]; }
};

template <typename T>
ParamLeavesT<T> make_leaves(const FusionNetParamsT<T>& params) {
    ParamLeavesT<T> out;
    for (auto& [name, tensor] : params.named_tensors())
        out.leaves.push_back(make_leaf(*tensor, "param"));
    return out;
}

// All intermediates of one forward pass, as graph variables.
template <typename T>
struct ForwardGraphT {
    VarT<T> f_ir;      // [C,H,W]
    VarT<T> f_vis;     // [C,H,W]
    VarT<T> f_cat;     // [2C,H,W]
    VarT<T> attn_mask; // A, (0,1)^[C,H,W]
    VarT<T> f_attn;    // [C,H,W]
    VarT<T> alpha;     // (0,1)^[1,H,W]
    VarT<T> fused;     // [1,H,W]
};

template <typename T>
VarT<T> encode_graph(const VarT<T>& image, const VarT<T>& w1, const VarT<T>& b1,
                     const VarT<T>& w2, const VarT<T>& b2) {
    auto h1 = relu(conv2d(image, w1, b1, kPadding));
    return relu(conv2d(h1, w2, b2, kPadding));
}

// Indices into the canonical leaf order.
enum ParamIndex : size_t {
    kIrW1 = 0, kIrB1, kIrW2, kIrB2,
    kVisW1, kVisB1, kVisW2, kVisB2,
    kAttnW1, kAttnB1, kAttnW2, kAttnB2,
    kAlphaW1, kAlphaB1, kAlphaW2, kAlphaB2,
};

template <typename T>
ForwardGraphT<T> forward_graph(const VarT<T>& ir, const VarT<T>& vis, const VarT<T>& vis_y,
                               const ParamLeavesT<T>& p) {
    ForwardGraphT<T> g;
    g.f_ir = encode_graph(ir, p[kIrW1], p[kIrB1], p[kIrW2], p[kIrB2]);
    g.f_vis = encode_graph(vis, p[kVisW1], p[kVisB1], p[kVisW2], p[kVisB2]);
    g.f_cat = concat_channels(g.f_ir, g.f_vis);
    auto attn_hidden = relu(conv2d(g.f_cat, p[kAttnW1], p[kAttnB1], kPadding));
    g.attn_mask = sigmoid(conv2d(attn_hidden, p[kAttnW2], p[kAttnB2], kPadding));
    g.f_attn = convex_blend(g.attn_mask, g.f_ir, g.f_vis);
    auto alpha_hidden = relu(conv2d(g.f_attn, p[kAlphaW1], p[kAlphaB1], kPadding));
    g.alpha = sigmoid(conv2d(alpha_hidden, p[kAlphaW2], p[kAlphaB2], kPadding));
    g.fused = convex_blend(g.alpha, ir, vis_y);
    return g;
}

// ---- plain-tensor API ----

template <typename T>
struct ForwardArtifactsT {
    TensorT<T> f_ir;
    TensorT<T> f_vis;
    TensorT<T> f_cat;
    TensorT<T> attn_mask;
    TensorT<T> f_attn;
    TensorT<T> alpha;
    TensorT<T> fused;
};

using ForwardArtifacts = ForwardArtifactsT<float>;

template <typename T>
TensorT<T> encode(const TensorT<T>& image, const EncoderParamsT<T>& params) {
    if (image.rank() != 3 || image.extent(0) != params.conv1.weight.extent(1))
        throw shape_error("encode: image " + shape_to_string(image.shape()) + " does not match encoder input channels " +
                          std::to_string(params.conv1.weight.extent(1)));
    auto out = encode_graph(make_const(image), make_const(params.conv1.weight),
                            make_const(params.conv1.bias), make_const(params.conv2.weight),
                            make_const(params.conv2.bias));
    return out->value;
}

template <typename T>
void require_unit_range(const TensorT<T>& t, const char* what) {
    for (int64_t i = 0; i < t.numel(); ++i)
        if (!(t[i] >= T(0) && t[i] <= T(1)))
            throw contract_error(std::string(what) + " must lie in [0,1], found " +
                                 std::to_string(static_cast<double>(t[i])));
}

// F_attn = A*F_ir + (1-A)*F_vis, elementwise convex combination.
template <typename T>
TensorT<T> attention_blend(const TensorT<T>& mask, const TensorT<T>& f_ir, const TensorT<T>& f_vis) {
    require_unit_range(mask, "attention mask");
    return convex_blend(make_const(mask), make_const(f_ir), make_const(f_vis))->value;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> modality_attention(const TensorT<T>& f_ir, const TensorT<T>& f_vis,
                                                     const AttentionParamsT<T>& params) {
    auto cat = concat_channels(make_const(f_ir), make_const(f_vis));
    auto hidden = relu(conv2d(cat, make_const(params.conv1.weight), make_const(params.conv1.bias), kPadding));
    auto mask = sigmoid(conv2d(hidden, make_const(params.conv2.weight), make_const(params.conv2.bias), kPadding));
    auto blended = convex_blend(mask, make_const(f_ir), make_const(f_vis));
    return {mask->value, blended->value};
}

template <typename T>
TensorT<T> alpha_map(const TensorT<T>& f_attn, const AlphaHeadParamsT<T>& params) {
    auto hidden = relu(conv2d(make_const(f_attn), make_const(params.conv1.weight),
                              make_const(params.conv1.bias), kPadding));
    auto alpha = sigmoid(conv2d(hidden, make_const(params.conv2.weight),
                                make_const(params.conv2.bias), kPadding));
    return alpha->value;
}

// I_fused = alpha*I_ir + (1-alpha)*I_vis_y, pixelwise.
template <typename T>
TensorT<T> blend(const TensorT<T>& alpha, const TensorT<T>& ir, const TensorT<T>& vis_y) {
    require_unit_range(alpha, "alpha map");
    require_unit_range(ir, "ir image");
    require_unit_range(vis_y, "vis_y image");
    return convex_blend(make_const(alpha), make_const(ir), make_const(vis_y))->value;
}

template <typename T>
ForwardArtifactsT<T> forward(const TensorT<T>& ir, const TensorT<T>& vis, const TensorT<T>& vis_y,
                             const FusionNetParamsT<T>& params) {
    auto leaves = make_leaves(params);
    auto g = forward_graph(make_const(ir), make_const(vis), make_const(vis_y), leaves);
    ForwardArtifactsT<T> out;
    out.f_ir = g.f_ir->value;
    out.f_vis = g.f_vis->value;
    out.f_cat = g.f_cat->value;
    out.attn_mask = g.attn_mask->value;
    out.f_attn = g.f_attn->value;
    out.alpha = g.alpha->value;
    out.fused = g.fused->value;
    return out;
}

} // namespace fusionnet
