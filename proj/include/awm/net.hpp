#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define AWM_HAVE_AVX2 1
#endif

#include "awm/common.hpp"
#include "awm/tensor.hpp"

namespace awm {

// ---------------------------------------------------------------------------
// GEMM kernels. Everything hot in the network reduces to
//   C[M][N] += A[M][K] * B[K][N]        (row-major, contiguous)
// which runs on a 4x16 register-tiled microkernel. Accumulation order is
// fixed, so results are deterministic for a given build.
// ---------------------------------------------------------------------------
namespace kernel {

#ifdef AWM_HAVE_AVX2

inline void gemm_acc(const float* A, const float* B, float* C, int M, int K, int N) {
    int n0 = 0;
    for (; n0 + 16 <= N; n0 += 16) {
        int m = 0;
        for (; m + 4 <= M; m += 4) {
            const float* a0 = A + static_cast<size_t>(m) * K;
            const float* a1 = a0 + K;
            const float* a2 = a1 + K;
            const float* a3 = a2 + K;
            float* c0 = C + static_cast<size_t>(m) * N + n0;
            float* c1 = c0 + N;
            float* c2 = c1 + N;
            float* c3 = c2 + N;
            __m256 v00 = _mm256_loadu_ps(c0), v01 = _mm256_loadu_ps(c0 + 8);
            __m256 v10 = _mm256_loadu_ps(c1), v11 = _mm256_loadu_ps(c1 + 8);
            __m256 v20 = _mm256_loadu_ps(c2), v21 = _mm256_loadu_ps(c2 + 8);
            __m256 v30 = _mm256_loadu_ps(c3), v31 = _mm256_loadu_ps(c3 + 8);
            const float* b = B + n0;
            for (int k = 0; k < K; ++k, b += N) {
                const __m256 b0 = _mm256_loadu_ps(b);
                const __m256 b1 = _mm256_loadu_ps(b + 8);
                __m256 a = _mm256_set1_ps(a0[k]);
                v00 = _mm256_fmadd_ps(a, b0, v00);
                v01 = _mm256_fmadd_ps(a, b1, v01);
                a = _mm256_set1_ps(a1[k]);
                v10 = _mm256_fmadd_ps(a, b0, v10);
                v11 = _mm256_fmadd_ps(a, b1, v11);
                a = _mm256_set1_ps(a2[k]);
                v20 = _mm256_fmadd_ps(a, b0, v20);
                v21 = _mm256_fmadd_ps(a, b1, v21);
                a = _mm256_set1_ps(a3[k]);
                v30 = _mm256_fmadd_ps(a, b0, v30);
                v31 = _mm256_fmadd_ps(a, b1, v31);
            }
            _mm256_storeu_ps(c0, v00);
            _mm256_storeu_ps(c0 + 8, v01);
            _mm256_storeu_ps(c1, v10);
            _mm256_storeu_ps(c1 + 8, v11);
            _mm256_storeu_ps(c2, v20);
            _mm256_storeu_ps(c2 + 8, v21);
            _mm256_storeu_ps(c3, v30);
            _mm256_storeu_ps(c3 + 8, v31);
        }
        for (; m < M; ++m) {
            const float* a0 = A + static_cast<size_t>(m) * K;
            float* c0 = C + static_cast<size_t>(m) * N + n0;
            __m256 v0 = _mm256_loadu_ps(c0), v1 = _mm256_loadu_ps(c0 + 8);
            const float* b = B + n0;
            for (int k = 0; k < K; ++k, b += N) {
                const __m256 a = _mm256_set1_ps(a0[k]);
                v0 = _mm256_fmadd_ps(a, _mm256_loadu_ps(b), v0);
                v1 = _mm256_fmadd_ps(a, _mm256_loadu_ps(b + 8), v1);
            }
            _mm256_storeu_ps(c0, v0);
            _mm256_storeu_ps(c0 + 8, v1);
        }
    }
    if (n0 < N) {
        const int rem = N - n0;
        for (int m = 0; m < M; ++m) {
            const float* a0 = A + static_cast<size_t>(m) * K;
            float* c0 = C + static_cast<size_t>(m) * N + n0;
            const float* b = B + n0;
            for (int k = 0; k < K; ++k, b += N) {
                const float a = a0[k];
                for (int n = 0; n < rem; ++n) c0[n] += a * b[n];
            }
        }
    }
}

#else

inline void gemm_acc(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const float* a = A + static_cast<size_t>(m) * K;
        float* c = C + static_cast<size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const float av = a[k];
            const float* b = B + static_cast<size_t>(k) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

#endif

// dst[c][r] = src[r][c]
inline void transpose(const float* src, float* dst, int rows, int cols) {
    constexpr int T = 16;
    for (int r0 = 0; r0 < rows; r0 += T)
        for (int c0 = 0; c0 < cols; c0 += T) {
            const int r1 = std::min(rows, r0 + T), c1 = std::min(cols, c0 + T);
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c)
                    dst[static_cast<size_t>(c) * rows + r] = src[static_cast<size_t>(r) * cols + c];
        }
}

}  // namespace kernel

// ---------------------------------------------------------------------------
// Network definition. Two fixed architectures are registered:
//   awm-cnn-v1 : conv3x3(1->32) relu pool2 conv3x3(32->64) relu pool2
//                flatten fc(1600->128) relu fc(128->10)
//   awm-mlp-v1 : flatten fc(784->256) relu fc(256->128) relu fc(128->10)
// Convolutions are stride 1 / no padding; pooling is 2x2 stride 2 (floor).
// ---------------------------------------------------------------------------

enum class LayerKind { Conv3x3, ReLU, MaxPool2, Flatten, Linear };

struct LayerDesc {
    LayerKind kind;
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    int param = -1;  // index of weight tensor; bias is param+1

    size_t in_count() const { return static_cast<size_t>(in_c) * in_h * in_w; }
    size_t out_count() const { return static_cast<size_t>(out_c) * out_h * out_w; }
};

// Scratch for one forward/backward pass. Owned by the caller so one (const)
// model can be evaluated from several threads, each with its own workspace.
struct FwdCache {
    int batch = -1;
    std::vector<Tensor> acts;                   // acts[i] = input of layer i; back() = logits
    std::vector<std::vector<float>> cols;       // per conv layer: im2col buffers, [s][K][P]
    std::vector<std::vector<int32_t>> pool_ix;  // per pool layer: argmax offsets
    // backward scratch
    std::vector<float> grad_a, grad_b, dcol, trans;
};

struct TrainConfig {
    float learning_rate = 0.005f;
    float weight_decay = 5e-4f;
    int epochs = 100;
    int batch_size = 64;
    // Adversarial training only: ramp the attack budget up over the first
    // few epochs. From-scratch PGD training with plain SGD stalls at the
    // uniform-prediction fixed point when hit with the full budget from
    // epoch zero; a short ramp bootstraps it.
    int attack_warmup_epochs = 3;
    // Watermark regimes only: passes over the watermark set per epoch.
    // Short schedules compress the cumulative number of watermark visits;
    // extra passes restore them.
    int wm_passes = 1;
    uint64_t seed = 0;

    void validate() const {
        if (learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
        if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (attack_warmup_epochs < 0) throw ConfigError("attack_warmup_epochs must be >= 0");
        if (wm_passes < 1) throw ConfigError("wm_passes must be >= 1");
    }
};

class ConvNet {
public:
    static constexpr int kInputH = 28;
    static constexpr int kInputW = 28;
    static constexpr int kClasses = 10;

    ConvNet() = default;

    static ConvNet make(const std::string& arch, uint64_t seed) {
        ConvNet net;
        net.arch_ = arch;
        net.build_layers(arch);
        net.init_params(seed);
        return net;
    }

    // Builds the layer plan and adopts parameters as-is (checkpoint load path).
    static ConvNet from_params(const std::string& arch, std::vector<ParamTensor> params) {
        ConvNet net;
        net.arch_ = arch;
        net.build_layers(arch);
        std::vector<ParamTensor> expect = std::move(net.params_);
        if (params.size() != expect.size())
            throw DataError("arch mismatch: expected " + std::to_string(expect.size()) +
                            " parameter tensors, got " + std::to_string(params.size()));
        for (size_t i = 0; i < params.size(); ++i) {
            if (params[i].name != expect[i].name || params[i].value.shape != expect[i].value.shape)
                throw DataError("arch mismatch: parameter '" + params[i].name +
                                "' does not fit architecture '" + arch + "'");
        }
        net.params_ = std::move(params);
        return net;
    }

    const std::string& arch() const { return arch_; }
    int num_classes() const { return kClasses; }
    const std::vector<LayerDesc>& layers() const { return layers_; }
    std::vector<ParamTensor>& params() { return params_; }
    const std::vector<ParamTensor>& params() const { return params_; }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

    bool has_masks() const {
        for (const auto& p : params_)
            if (p.has_mask()) return true;
        return false;
    }

    // Forward pass on a batch [N,1,28,28] (or [1,28,28] for one sample).
    // Returns the logits tensor held by the cache.
    const Tensor& forward(const Tensor& batch, FwdCache& cache) const {
        const int n = batch_count(batch);
        prepare_cache(cache, n);
        cache.acts[0].data.assign(batch.data.begin(), batch.data.end());
        for (size_t l = 0; l < layers_.size(); ++l) forward_layer(l, cache);
        const Tensor& logits = cache.acts.back();
        if (!logits.all_finite())
            throw NumericError("non-finite forward output at layer '" + locate_nonfinite(cache) + "'");
        return logits;
    }

    // Backpropagates dlogits through the cached forward pass. When
    // accumulate_param_grads is set, gradients are added into
    // ParamTensor.grad. When input_grad is non-null it receives
    // dLoss/dInput for the whole batch.
    void backward(FwdCache& cache, const Tensor& dlogits, bool accumulate_param_grads,
                  Tensor* input_grad) {
        backward_impl(cache, dlogits, accumulate_param_grads, input_grad);
        if (accumulate_param_grads) {
            for (const auto& p : params_)
                if (!p.grad.all_finite())
                    throw NumericError("non-finite gradient in parameter '" + p.name + "'");
        }
    }

    // Input-gradient-only backward; const so attacks can share one model
    // across threads.
    void backward_input(FwdCache& cache, const Tensor& dlogits, Tensor& input_grad) const {
        const_cast<ConvNet*>(this)->backward_impl(cache, dlogits, false, &input_grad);
    }

    void zero_grads() {
        for (auto& p : params_) p.zero_grad();
    }

private:
    std::string arch_;
    std::vector<LayerDesc> layers_;
    std::vector<ParamTensor> params_;

    static int batch_count(const Tensor& batch) {
        if (batch.shape.size() == 4 && batch.dim(1) == 1 && batch.dim(2) == kInputH &&
            batch.dim(3) == kInputW)
            return batch.dim(0);
        if (batch.shape.size() == 3 && batch.dim(0) == 1 && batch.dim(1) == kInputH &&
            batch.dim(2) == kInputW)
            return 1;
        throw DataError("input batch must be [N,1,28,28]");
    }

    void add_conv(int in_c, int hw, int out_c, const std::string& name) {
        LayerDesc d;
        d.kind = LayerKind::Conv3x3;
        d.in_c = in_c;
        d.in_h = d.in_w = hw;
        d.out_c = out_c;
        d.out_h = d.out_w = hw - 2;
        d.param = static_cast<int>(params_.size());
        layers_.push_back(d);
        params_.emplace_back(name + ".weight", std::vector<int>{out_c, in_c, 3, 3});
        params_.emplace_back(name + ".bias", std::vector<int>{out_c});
    }

    void add_relu(const LayerDesc& prev) {
        LayerDesc d;
        d.kind = LayerKind::ReLU;
        d.in_c = d.out_c = prev.out_c;
        d.in_h = d.out_h = prev.out_h;
        d.in_w = d.out_w = prev.out_w;
        layers_.push_back(d);
    }

    void add_pool(const LayerDesc& prev) {
        LayerDesc d;
        d.kind = LayerKind::MaxPool2;
        d.in_c = d.out_c = prev.out_c;
        d.in_h = prev.out_h;
        d.in_w = prev.out_w;
        d.out_h = prev.out_h / 2;
        d.out_w = prev.out_w / 2;
        layers_.push_back(d);
    }

    void add_flatten(const LayerDesc& prev) {
        LayerDesc d;
        d.kind = LayerKind::Flatten;
        d.in_c = prev.out_c;
        d.in_h = prev.out_h;
        d.in_w = prev.out_w;
        d.out_c = 1;
        d.out_h = 1;
        d.out_w = prev.out_c * prev.out_h * prev.out_w;
        layers_.push_back(d);
    }

    void add_linear(int in_n, int out_n, const std::string& name) {
        LayerDesc d;
        d.kind = LayerKind::Linear;
        d.in_c = d.out_c = 1;
        d.in_h = d.out_h = 1;
        d.in_w = in_n;
        d.out_w = out_n;
        d.param = static_cast<int>(params_.size());
        layers_.push_back(d);
        // Weight layout is [in][out]: the batched forward GEMM then streams
        // rows of W while the output tile stays in registers.
        params_.emplace_back(name + ".weight", std::vector<int>{in_n, out_n});
        params_.emplace_back(name + ".bias", std::vector<int>{out_n});
    }

    void build_layers(const std::string& arch) {
        layers_.clear();
        params_.clear();
        if (arch == "awm-cnn-v1") {
            add_conv(1, 28, 32, "conv1");
            add_relu(layers_.back());
            add_pool(layers_.back());
            add_conv(32, 13, 64, "conv2");
            add_relu(layers_.back());
            add_pool(layers_.back());
            add_flatten(layers_.back());
            add_linear(1600, 128, "fc1");
            add_relu(layers_.back());
            add_linear(128, kClasses, "fc2");
        } else if (arch == "awm-mlp-v1") {
            LayerDesc input;
            input.out_c = 1;
            input.out_h = 28;
            input.out_w = 28;
            add_flatten(input);
            add_linear(784, 256, "fc1");
            add_relu(layers_.back());
            add_linear(256, 128, "fc2");
            add_relu(layers_.back());
            add_linear(128, kClasses, "fc3");
        } else {
            throw ConfigError("unknown architecture '" + arch + "'");
        }
    }

    void init_params(uint64_t seed) {
        for (auto& p : params_) {
            if (p.value.shape.size() == 1) continue;  // biases start at zero
            int fan_in;
            if (p.value.shape.size() == 4)
                fan_in = p.value.shape[1] * p.value.shape[2] * p.value.shape[3];
            else
                fan_in = p.value.shape[0];
            const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
            Rng rng(derive_seed(seed, p.name));
            for (auto& v : p.value.data) v = rng.uniform(-limit, limit);
        }
    }

    static void ensure(Tensor& t, std::vector<int> shape) {
        const size_t n = Tensor::checked_count(shape);
        if (t.data.size() != n) t.data.resize(n);
        t.shape = std::move(shape);
    }

    void prepare_cache(FwdCache& cache, int n) const {
        cache.acts.resize(layers_.size() + 1);
        cache.cols.resize(layers_.size());
        cache.pool_ix.resize(layers_.size());
        ensure(cache.acts[0], {n, 1, kInputH, kInputW});
        size_t max_count = cache.acts[0].size();
        for (size_t l = 0; l < layers_.size(); ++l) {
            const LayerDesc& d = layers_[l];
            ensure(cache.acts[l + 1], {n, d.out_c, d.out_h, d.out_w});
            max_count = std::max(max_count, static_cast<size_t>(n) * d.in_count());
            if (d.kind == LayerKind::Conv3x3)
                cache.cols[l].resize(static_cast<size_t>(n) * d.in_c * 9 * d.out_h * d.out_w);
            if (d.kind == LayerKind::MaxPool2)
                cache.pool_ix[l].resize(static_cast<size_t>(n) * d.out_count());
        }
        cache.grad_a.resize(max_count);
        cache.grad_b.resize(max_count);
        cache.batch = n;
    }

    void forward_layer(size_t l, FwdCache& cache) const {
        const LayerDesc& d = layers_[l];
        const Tensor& in = cache.acts[l];
        Tensor& out = cache.acts[l + 1];
        const int n = cache.batch;
        switch (d.kind) {
            case LayerKind::Conv3x3: {
                const int K = d.in_c * 9, P = d.out_h * d.out_w;
                const float* W = params_[d.param].value.ptr();
                const float* B = params_[d.param + 1].value.ptr();
                for (int s = 0; s < n; ++s) {
                    float* col = cache.cols[l].data() + static_cast<size_t>(s) * K * P;
                    im2col(in.ptr() + s * d.in_count(), d, col);
                    float* o = out.ptr() + s * d.out_count();
                    for (int m = 0; m < d.out_c; ++m)
                        std::fill(o + static_cast<size_t>(m) * P, o + static_cast<size_t>(m + 1) * P,
                                  B[m]);
                    kernel::gemm_acc(W, col, o, d.out_c, K, P);
                }
                break;
            }
            case LayerKind::ReLU: {
                const float* x = in.ptr();
                float* y = out.ptr();
                const size_t total = static_cast<size_t>(n) * d.out_count();
                for (size_t i = 0; i < total; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
                break;
            }
            case LayerKind::MaxPool2: {
                for (int s = 0; s < n; ++s)
                    pool_forward(in.ptr() + s * d.in_count(), d, out.ptr() + s * d.out_count(),
                                 cache.pool_ix[l].data() + static_cast<size_t>(s) * d.out_count());
                break;
            }
            case LayerKind::Flatten:
                out.data.assign(in.data.begin(), in.data.end());
                break;
            case LayerKind::Linear: {
                const int in_n = d.in_w, out_n = d.out_w;
                const float* W = params_[d.param].value.ptr();
                const float* B = params_[d.param + 1].value.ptr();
                float* y = out.ptr();
                for (int s = 0; s < n; ++s) std::copy(B, B + out_n, y + static_cast<size_t>(s) * out_n);
                kernel::gemm_acc(in.ptr(), W, y, n, in_n, out_n);
                break;
            }
        }
    }

    void backward_impl(FwdCache& cache, const Tensor& dlogits, bool param_grads,
                       Tensor* input_grad) {
        const int n = cache.batch;
        if (static_cast<int>(dlogits.size()) != n * kClasses)
            throw DataError("dlogits shape mismatch");
        const float* dy = dlogits.ptr();
        float* scratch[2] = {cache.grad_a.data(), cache.grad_b.data()};
        int which = 0;
        for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
            const LayerDesc& d = layers_[li];
            const bool need_dx = li > 0 || input_grad != nullptr;
            float* dx = scratch[which];
            const size_t in_total = static_cast<size_t>(n) * d.in_count();
            switch (d.kind) {
                case LayerKind::Conv3x3:
                    conv_backward(d, cache, static_cast<size_t>(li), dy, param_grads,
                                  need_dx ? dx : nullptr);
                    break;
                case LayerKind::ReLU: {
                    const float* x = cache.acts[li].ptr();
                    for (size_t i = 0; i < in_total; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
                    break;
                }
                case LayerKind::MaxPool2: {
                    std::fill(dx, dx + in_total, 0.0f);
                    const size_t oc = d.out_count();
                    for (int s = 0; s < n; ++s) {
                        const float* g = dy + s * oc;
                        const int32_t* ix = cache.pool_ix[li].data() + static_cast<size_t>(s) * oc;
                        float* o = dx + s * d.in_count();
                        for (size_t i = 0; i < oc; ++i) o[ix[i]] += g[i];
                    }
                    break;
                }
                case LayerKind::Flatten:
                    std::memcpy(dx, dy, in_total * sizeof(float));
                    break;
                case LayerKind::Linear:
                    linear_backward(d, cache, dy, param_grads, need_dx ? dx : nullptr);
                    break;
            }
            if (!need_dx) {
                dy = nullptr;
                break;
            }
            dy = dx;
            which ^= 1;
        }
        if (input_grad) {
            ensure(*input_grad, {n, 1, kInputH, kInputW});
            std::memcpy(input_grad->ptr(), dy, input_grad->size() * sizeof(float));
        }
    }

    void conv_backward(const LayerDesc& d, FwdCache& cache, size_t li, const float* dy,
                       bool param_grads, float* dx) {
        const int n = cache.batch;
        const int K = d.in_c * 9, P = d.out_h * d.out_w, M = d.out_c;
        const float* W = params_[d.param].value.ptr();
        if (dx) {
            // dcol[K][P] = W^T[K][M] * dY[M][P], then scatter back to dx
            cache.trans.resize(static_cast<size_t>(K) * M);
            kernel::transpose(W, cache.trans.data(), M, K);
            cache.dcol.resize(static_cast<size_t>(K) * P);
            std::fill(dx, dx + static_cast<size_t>(n) * d.in_count(), 0.0f);
            for (int s = 0; s < n; ++s) {
                std::fill(cache.dcol.begin(), cache.dcol.end(), 0.0f);
                kernel::gemm_acc(cache.trans.data(), dy + static_cast<size_t>(s) * M * P,
                                 cache.dcol.data(), K, M, P);
                col2im(cache.dcol.data(), d, dx + s * d.in_count());
            }
        }
        if (param_grads) {
            // dW[M][K] += dY[M][P] * col^T[P][K]
            float* dW = params_[d.param].grad.ptr();
            float* dB = params_[d.param + 1].grad.ptr();
            cache.trans.resize(static_cast<size_t>(P) * K);
            for (int s = 0; s < n; ++s) {
                const float* col = cache.cols[li].data() + static_cast<size_t>(s) * K * P;
                const float* g = dy + static_cast<size_t>(s) * M * P;
                kernel::transpose(col, cache.trans.data(), K, P);
                kernel::gemm_acc(g, cache.trans.data(), dW, M, P, K);
                for (int m = 0; m < M; ++m) {
                    const float* gm = g + static_cast<size_t>(m) * P;
                    float sum = 0.0f;
                    for (int p = 0; p < P; ++p) sum += gm[p];
                    dB[m] += sum;
                }
            }
        }
    }

    void linear_backward(const LayerDesc& d, FwdCache& cache, const float* dy, bool param_grads,
                         float* dx) {
        const int n = cache.batch;
        const int in_n = d.in_w, out_n = d.out_w;
        const size_t li = layer_index_of_param(d.param);
        const Tensor& in = cache.acts[li];
        const float* W = params_[d.param].value.ptr();
        if (param_grads) {
            // dW[in][out] += X^T[in][N] * dY[N][out]
            float* dW = params_[d.param].grad.ptr();
            float* dB = params_[d.param + 1].grad.ptr();
            cache.trans.resize(static_cast<size_t>(in_n) * n);
            kernel::transpose(in.ptr(), cache.trans.data(), n, in_n);
            kernel::gemm_acc(cache.trans.data(), dy, dW, in_n, n, out_n);
            for (int s = 0; s < n; ++s) {
                const float* g = dy + static_cast<size_t>(s) * out_n;
                for (int o = 0; o < out_n; ++o) dB[o] += g[o];
            }
        }
        if (dx) {
            // dX[N][in] = dY[N][out] * W^T[out][in]
            cache.trans.resize(static_cast<size_t>(out_n) * in_n);
            kernel::transpose(W, cache.trans.data(), in_n, out_n);
            std::fill(dx, dx + static_cast<size_t>(n) * in_n, 0.0f);
            kernel::gemm_acc(dy, cache.trans.data(), dx, n, out_n, in_n);
        }
    }

    size_t layer_index_of_param(int param) const {
        for (size_t l = 0; l < layers_.size(); ++l)
            if (layers_[l].param == param) return l;
        throw Error("internal: parameter without layer");
    }

    static void im2col(const float* in, const LayerDesc& d, float* col) {
        const int oh = d.out_h, ow = d.out_w, iw = d.in_w, ih = d.in_h;
        int k = 0;
        for (int c = 0; c < d.in_c; ++c) {
            const float* ch = in + static_cast<size_t>(c) * ih * iw;
            for (int dy = 0; dy < 3; ++dy)
                for (int dxo = 0; dxo < 3; ++dxo, ++k) {
                    float* row = col + static_cast<size_t>(k) * oh * ow;
                    for (int y = 0; y < oh; ++y) {
                        const float* src = ch + static_cast<size_t>(y + dy) * iw + dxo;
                        std::copy(src, src + ow, row + static_cast<size_t>(y) * ow);
                    }
                }
        }
    }

    static void col2im(const float* col, const LayerDesc& d, float* din) {
        const int oh = d.out_h, ow = d.out_w, iw = d.in_w, ih = d.in_h;
        int k = 0;
        for (int c = 0; c < d.in_c; ++c) {
            float* ch = din + static_cast<size_t>(c) * ih * iw;
            for (int dy = 0; dy < 3; ++dy)
                for (int dxo = 0; dxo < 3; ++dxo, ++k) {
                    const float* row = col + static_cast<size_t>(k) * oh * ow;
                    for (int y = 0; y < oh; ++y) {
                        float* dst = ch + static_cast<size_t>(y + dy) * iw + dxo;
                        const float* src = row + static_cast<size_t>(y) * ow;
                        for (int x = 0; x < ow; ++x) dst[x] += src[x];
                    }
                }
        }
    }

    static void pool_forward(const float* x, const LayerDesc& d, float* y, int32_t* ix) {
        const int ih = d.in_h, iw = d.in_w, oh = d.out_h, ow = d.out_w;
        for (int c = 0; c < d.in_c; ++c) {
            const float* ch = x + static_cast<size_t>(c) * ih * iw;
            const int32_t base = c * ih * iw;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const int i0 = (oy * 2) * iw + ox * 2;
                    int best = i0;
                    float bv = ch[i0];
                    if (ch[i0 + 1] > bv) { bv = ch[i0 + 1]; best = i0 + 1; }
                    if (ch[i0 + iw] > bv) { bv = ch[i0 + iw]; best = i0 + iw; }
                    if (ch[i0 + iw + 1] > bv) { bv = ch[i0 + iw + 1]; best = i0 + iw + 1; }
                    *y++ = bv;
                    *ix++ = base + best;
                }
        }
    }

    std::string locate_nonfinite(const FwdCache& cache) const {
        for (size_t l = 0; l < layers_.size(); ++l)
            if (!cache.acts[l + 1].all_finite()) return layer_name(l);
        return "output";
    }

    std::string layer_name(size_t l) const {
        const LayerDesc& d = layers_[l];
        if (d.param >= 0) {
            const std::string& w = params_[d.param].name;
            return w.substr(0, w.find('.'));
        }
        switch (d.kind) {
            case LayerKind::ReLU: return "relu@" + std::to_string(l);
            case LayerKind::MaxPool2: return "pool@" + std::to_string(l);
            case LayerKind::Flatten: return "flatten@" + std::to_string(l);
            default: return "layer@" + std::to_string(l);
        }
    }
};

// ---------------------------------------------------------------------------
// Loss and training-step operations.
// ---------------------------------------------------------------------------

inline void check_labels(const std::vector<int>& labels, int n_classes = ConvNet::kClasses) {
    for (int y : labels)
        if (y < 0 || y >= n_classes)
            throw DataError("label out of range: " + std::to_string(y));
}

// Mean softmax cross-entropy over the batch.
inline float cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const int C = logits.shape.back();
    const int n = static_cast<int>(logits.size()) / C;
    if (static_cast<size_t>(n) != labels.size())
        throw DataError("logits/labels batch size mismatch");
    check_labels(labels, C);
    double total = 0.0;
    for (int s = 0; s < n; ++s) {
        const float* row = logits.ptr() + static_cast<size_t>(s) * C;
        float m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        float sum = 0.0f;
        for (int c = 0; c < C; ++c) sum += std::exp(row[c] - m);
        total += (m + std::log(sum)) - row[labels[s]];
    }
    return static_cast<float>(total / n);
}

// Fills dlogits with d(loss)/d(logits), scaling each row by grad_row_scale
// (1/N gives the mean-reduced training gradient; 1 gives per-sample
// gradients that do not depend on how the batch was chunked). Returns the
// mean loss; per-sample losses go to row_losses when provided.
inline float cross_entropy_grad(const Tensor& logits, const std::vector<int>& labels,
                                Tensor& dlogits, float grad_row_scale,
                                std::vector<float>* row_losses = nullptr) {
    const int C = logits.shape.back();
    const int n = static_cast<int>(logits.size()) / C;
    if (static_cast<size_t>(n) != labels.size())
        throw DataError("logits/labels batch size mismatch");
    check_labels(labels, C);
    dlogits.shape = logits.shape;
    dlogits.data.resize(logits.size());
    if (row_losses) row_losses->assign(n, 0.0f);
    double total = 0.0;
    for (int s = 0; s < n; ++s) {
        const float* row = logits.ptr() + static_cast<size_t>(s) * C;
        float* g = dlogits.ptr() + static_cast<size_t>(s) * C;
        float m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        float sum = 0.0f;
        for (int c = 0; c < C; ++c) sum += std::exp(row[c] - m);
        const float lse = m + std::log(sum);
        for (int c = 0; c < C; ++c) g[c] = std::exp(row[c] - lse) * grad_row_scale;
        g[labels[s]] -= grad_row_scale;
        const float loss = lse - row[labels[s]];
        if (row_losses) (*row_losses)[s] = loss;
        total += loss;
    }
    return static_cast<float>(total / n);
}

struct BackwardResult {
    float loss = 0.0f;
    Tensor input_grad;
};

// Full training-direction backward: accumulates parameter gradients of the
// mean cross-entropy over the batch and returns the input gradient.
inline BackwardResult backward(ConvNet& model, const Tensor& batch, const std::vector<int>& labels) {
    FwdCache cache;
    const Tensor& logits = model.forward(batch, cache);
    Tensor dlogits;
    BackwardResult r;
    r.loss = cross_entropy_grad(logits, labels, dlogits, 1.0f / static_cast<float>(labels.size()));
    model.backward(cache, dlogits, true, &r.input_grad);
    return r;
}

// SGD update with L2 weight decay: v <- v - lr*(g + wd*v). Masked slots stay
// zero; gradients are cleared afterwards.
inline void sgd_step(ConvNet& model, const TrainConfig& cfg) {
    const float lr = cfg.learning_rate, wd = cfg.weight_decay;
    for (auto& p : model.params()) {
        float* v = p.value.ptr();
        const float* g = p.grad.ptr();
        const size_t n = p.size();
        if (p.has_mask()) {
            const uint8_t* m = p.mask.data();
            for (size_t i = 0; i < n; ++i) v[i] = m[i] ? v[i] - lr * (g[i] + wd * v[i]) : 0.0f;
        } else {
            for (size_t i = 0; i < n; ++i) v[i] -= lr * (g[i] + wd * v[i]);
        }
        p.zero_grad();
    }
}

inline Tensor forward(const ConvNet& model, const Tensor& batch) {
    FwdCache cache;
    return model.forward(batch, cache);
}

inline int argmax_row(const float* row, int n) {
    int best = 0;
    for (int c = 1; c < n; ++c)
        if (row[c] > row[best]) best = c;  // ties keep the lowest index
    return best;
}

inline std::vector<int> predict_batch(const ConvNet& model, const Tensor& batch, FwdCache& cache) {
    const Tensor& logits = model.forward(batch, cache);
    const int C = model.num_classes();
    const int n = static_cast<int>(logits.size()) / C;
    std::vector<int> out(n);
    for (int s = 0; s < n; ++s) out[s] = argmax_row(logits.ptr() + static_cast<size_t>(s) * C, C);
    return out;
}

inline int predict(const ConvNet& model, const Tensor& x) {
    FwdCache cache;
    return predict_batch(model, x, cache)[0];
}

}  // namespace awm
