#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmap/net.hpp"
#include "rmap/tensor.hpp"

// Test-set metrics. NMSE and SSIM follow the per-sample-then-mean
// conventions; SSIM uses whole-image moments (no sliding window). PSNR's
// denominator is the per-element mean squared error, so the reported
// values are resolution independent.

namespace rmap::metrics {

// Per-sample squared-error ratio ||e - t||^2 / ||t||^2, averaged. Samples
// with zero-norm targets are excluded and reported through `skipped`.
double nmse(const std::vector<Tensor>& estimates, const std::vector<Tensor>& targets,
            std::vector<double>* per_sample = nullptr,
            std::vector<std::size_t>* skipped = nullptr);

// sqrt of the mean per-sample squared L2 error (Eq-9 convention mean).
double rmse(const std::vector<Tensor>& estimates, const std::vector<Tensor>& targets);

// Whole-image SSIM with k1=0.01, k2=0.03, L=1.
double ssim_single(const Tensor& estimate, const Tensor& target);
double ssim(const std::vector<Tensor>& estimates, const std::vector<Tensor>& targets);

// Mean over samples of 10*log10(MAX^2 / per-element MSE), MAX = 1.
// Zero-error samples are excluded and reported through `skipped`.
double psnr(const std::vector<Tensor>& estimates, const std::vector<Tensor>& targets,
            std::vector<std::size_t>* skipped = nullptr);

struct NmseSummary {
    double min = 0, max = 0, mean = 0;
    double lo95 = 0, hi95 = 0;  // empirical 2.5th / 97.5th percentiles
};
NmseSummary nmse_summary(std::vector<double> per_sample);

// Linear-interpolation percentile over a sorted list, p in [0, 100].
double percentile(const std::vector<double>& sorted_values, double p);

struct ThroughputResult {
    double maps_per_second = 0;
    double seconds_per_km2 = 0;
};
// Wall-clock eval-mode forwards after one warmup pass.
ThroughputResult measure_throughput(net::R2Net& model, const Shape& input_shape, int repeats,
                                    double map_area_m2);
double inference_time_per_km2(double maps_per_second, double map_area_m2);

struct EvalReport {
    std::string model_name;
    std::vector<double> per_sample_nmse;
    std::size_t skipped_nmse = 0;
    std::size_t skipped_psnr = 0;
    double nmse = 0, rmse = 0, ssim = 0, psnr = 0;
    NmseSummary summary;
    std::int64_t params = 0;
    std::int64_t macs = 0;
    double throughput_maps_per_s = 0;
    double inference_time_per_km2_s = 0;
    double train_loss = 0, val_loss = 0;  // Eq-9 convention when available

    std::string to_json() const;
    // Aligned columns in Table-style order.
    std::string to_table() const;
};

EvalReport evaluate(net::R2Net& model, const std::vector<Tensor>& images,
                    const std::vector<Tensor>& targets);

}  // namespace rmap::metrics
