#pragma once

#include <random>
#include <span>

#include "spermflow/tensor.hpp"

namespace spermflow::nn {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
};

// Output spatial size with floor semantics; throws when it would be empty.
std::int64_t conv_output_size(std::int64_t input, std::int64_t kernel, int stride, int padding);

// Cross-correlation without bias. input [N,C,H,W], weight [K,C,kh,kw].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, Conv2dOptions options);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Training mode normalises with biased batch statistics and folds the
// unbiased variance into the running estimates; eval mode reads them only.
template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                            BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool training,
                            double momentum = kBatchNormMomentum, double eps = kBatchNormEps);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// Padded cells never win; ties go to the first maximum in row-major order.
template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, int kernel = 3, int stride = 2, int padding = 1);

// [N,C,H,W] -> [N,C,1,1]
template <typename T>
BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>& input);

// [N, ...] -> [N, prod(...)]
template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& input);

// input [N,in], weight [out,in], bias [out]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Multiplies elementwise by a fixed mask; backward reuses the same mask.
template <typename T>
BasicTensor<T> apply_mask(const BasicTensor<T>& input, std::vector<T> mask);

// Inverted dropout: survivors scaled by 1/(1-p). Identity in eval mode or
// for p = 0 (no random draws are made then).
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double p, bool training, std::mt19937_64& rng);

}  // namespace spermflow::nn
