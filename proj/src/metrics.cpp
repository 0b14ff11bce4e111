#include "rmap/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "rmap/kernels.hpp"

namespace rmap::metrics {
namespace {

void check_pairs(const std::vector<Tensor>& est, const std::vector<Tensor>& tgt,
                 const char* op) {
    if (est.size() != tgt.size())
        fail(std::string(op) + ": " + std::to_string(est.size()) + " estimates vs " +
             std::to_string(tgt.size()) + " targets");
    if (est.empty()) fail(std::string(op) + ": empty test set");
    for (std::size_t i = 0; i < est.size(); ++i)
        if (!(est[i].shape() == tgt[i].shape()))
            fail(std::string(op) + ": sample " + std::to_string(i) + " shape mismatch " +
                 est[i].shape().str() + " vs " + tgt[i].shape().str());
}

}  // namespace

double nmse(const std::vector<Tensor>& estimates, const std::vector<Tensor>& targets,
            std::vector<double>* per_sample, std::vector<std::size_t>* skipped) {
    check_pairs(estimates, targets, "nmse");
    double acc = 0.0;
    std::size_t used = 0;
    if (per_sample) per_sample->clear();
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double err = kern::sqdiff_sum(estimates[i].data().data(), targets[i].data().data(),
                                            targets[i].data().size());
        const double norm = kern::sumsq(targets[i].data().data(), targets[i].data().size());
        if (norm == 0.0) {
            if (skipped) skipped->push_back(i);
            continue;
        }
        const double v = err / norm;
        if (per_sample) per_sample->push_back(v);
        acc += v;
        ++used;
    }
    if (used == 0) fail("nmse: every target had zero norm");
    return acc / static_cast<double>(used);
}

double rmse(const std::vector<Tensor>& estimates, const std::vector<Tensor>& targets) {
    check_pairs(estimates, targets, "rmse");
    double acc = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i)
        acc += kern::sqdiff_sum(estimates[i].data().data(), targets[i].data().data(),
                                targets[i].data().size());
    return std::sqrt(acc / static_cast<double>(estimates.size()));
}

double ssim_single(const Tensor& estimate, const Tensor& target) {
    if (!(estimate.shape() == target.shape()))
        fail("ssim: shape mismatch " + estimate.shape().str() + " vs " + target.shape().str());
    const auto a = target.data();    // V
    const auto b = estimate.data();  // V~
    const auto n = static_cast<double>(a.size());
    const double mu_a = kern::sum(a.data(), a.size()) / n;
    const double mu_b = kern::sum(b.data(), b.size()) / n;
    double var_a = 0.0, var_b = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - mu_a;
        const double db = b[i] - mu_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    constexpr double c1 = 0.01 * 0.01;  // (k1 L)^2, L = 1
    constexpr double c2 = 0.03 * 0.03;
    return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
           ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

double ssim(const std::vector<Tensor>& estimates, const std::vector<Tensor>& targets) {
    check_pairs(estimates, targets, "ssim");
    double acc = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i)
        acc += ssim_single(estimates[i], targets[i]);
    return acc / static_cast<double>(estimates.size());
}

double psnr(const std::vector<Tensor>& estimates, const std::vector<Tensor>& targets,
            std::vector<std::size_t>* skipped) {
    check_pairs(estimates, targets, "psnr");
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double mse = kern::sqdiff_sum(estimates[i].data().data(), targets[i].data().data(),
                                            targets[i].data().size()) /
                           static_cast<double>(targets[i].data().size());
        if (mse == 0.0) {
            if (skipped) skipped->push_back(i);  // infinite PSNR
            continue;
        }
        acc += 10.0 * std::log10(1.0 / mse);  // MAX = 1
        ++used;
    }
    if (used == 0) fail("psnr: every sample had zero error (infinite PSNR)");
    return acc / static_cast<double>(used);
}

double percentile(const std::vector<double>& sorted_values, double p) {
    if (sorted_values.empty()) fail("percentile: empty list");
    if (sorted_values.size() == 1) return sorted_values[0];
    const double rank = p / 100.0 * static_cast<double>(sorted_values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, sorted_values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

NmseSummary nmse_summary(std::vector<double> per_sample) {
    if (per_sample.empty()) fail("nmse_summary: empty list");
    NmseSummary s;
    double acc = 0.0;
    for (double v : per_sample) acc += v;
    s.mean = acc / static_cast<double>(per_sample.size());
    std::sort(per_sample.begin(), per_sample.end());
    s.min = per_sample.front();
    s.max = per_sample.back();
    s.lo95 = percentile(per_sample, 2.5);
    s.hi95 = percentile(per_sample, 97.5);
    return s;
}

ThroughputResult measure_throughput(net::R2Net& model, const Shape& input_shape, int repeats,
                                    double map_area_m2) {
    if (repeats < 1) fail("measure_throughput: repeats must be >= 1");
    NoGradGuard ng;
    Tensor x = Tensor::full(input_shape, 0.1f);
    model.forward(x, false);  // warmup
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) model.forward(x, false);
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    ThroughputResult r;
    const auto batch = static_cast<double>(input_shape[0]);
    r.maps_per_second = repeats * batch / std::max(secs, 1e-9);
    r.seconds_per_km2 = inference_time_per_km2(r.maps_per_second, map_area_m2);
    return r;
}

double inference_time_per_km2(double maps_per_second, double map_area_m2) {
    if (maps_per_second <= 0 || map_area_m2 <= 0)
        fail("inference_time_per_km2: throughput and area must be positive");
    const double maps_per_km2 = 1e6 / map_area_m2;
    return maps_per_km2 / maps_per_second;
}

EvalReport evaluate(net::R2Net& model, const std::vector<Tensor>& images,
                    const std::vector<Tensor>& targets) {
    if (images.size() != targets.size() || images.empty())
        fail("evaluate: need matching non-empty image/target lists");
    NoGradGuard ng;
    std::vector<Tensor> estimates;
    estimates.reserve(images.size());
    for (const auto& img : images) {
        Tensor x = img;
        if (x.shape().rank() == 3)
            x = Tensor::from_data(Shape{1, img.dim(0), img.dim(1), img.dim(2)},
                                  {img.data().begin(), img.data().end()});
        estimates.push_back(model.forward(x, false));
    }
    std::vector<Tensor> tgts;
    tgts.reserve(targets.size());
    for (const auto& t : targets) {
        Tensor y = t;
        if (y.shape().rank() == 3)
            y = Tensor::from_data(Shape{1, t.dim(0), t.dim(1), t.dim(2)},
                                  {t.data().begin(), t.data().end()});
        tgts.push_back(y);
    }
    EvalReport rep;
    rep.model_name = net::variant_name(model.spec().variant);
    std::vector<std::size_t> skipped_nmse, skipped_psnr;
    rep.nmse = nmse(estimates, tgts, &rep.per_sample_nmse, &skipped_nmse);
    rep.rmse = rmse(estimates, tgts);
    rep.ssim = ssim(estimates, tgts);
    rep.psnr = psnr(estimates, tgts, &skipped_psnr);
    rep.skipped_nmse = skipped_nmse.size();
    rep.skipped_psnr = skipped_psnr.size();
    rep.summary = nmse_summary(rep.per_sample_nmse);
    rep.params = net::count_params(model);
    rep.macs = net::count_macs(model, tgts[0].shape().rank() == 4
                                          ? Shape{1, model.spec().plan.c_in, tgts[0].dim(2),
                                                  tgts[0].dim(3)}
                                          : tgts[0].shape());
    return rep;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["model"] = model_name;
    j["nmse"] = nmse;
    j["rmse"] = rmse;
    j["ssim"] = ssim;
    j["psnr_db"] = psnr;
    j["psnr_convention"] = "per-element mean squared error, MAX=1";
    j["nmse_summary"] = {{"min", summary.min},
                         {"max", summary.max},
                         {"mean", summary.mean},
                         {"ci95", nlohmann::json::array({summary.lo95, summary.hi95})},
                         {"ci95_method", "empirical 2.5/97.5 percentiles"}};
    j["per_sample_nmse"] = per_sample_nmse;
    j["skipped_zero_norm_targets"] = skipped_nmse;
    j["skipped_zero_error_samples"] = skipped_psnr;
    j["params"] = params;
    j["macs"] = macs;
    j["throughput_maps_per_s"] = throughput_maps_per_s;
    j["inference_time_per_km2_s"] = inference_time_per_km2_s;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss;
    return j.dump(2);
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    auto fmt = [](double v, int prec = 4) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(prec);
        s << v;
        return s.str();
    };
    const std::vector<std::pair<std::string, std::string>> cols = {
        {"Method", model_name},
        {"Train loss", fmt(train_loss)},
        {"Val loss", fmt(val_loss)},
        {"NMSE", fmt(nmse)},
        {"RMSE", fmt(rmse)},
        {"SSIM", fmt(ssim)},
        {"PSNR", fmt(psnr, 2)},
        {"#param", std::to_string(params)},
        {"MACs", std::to_string(macs)},
        {"Throughput", fmt(throughput_maps_per_s, 2)},
        {"Time/km2 (s)", fmt(inference_time_per_km2_s, 2)},
    };
    std::string head, sep, row;
    for (const auto& [h, v] : cols) {
        const std::size_t w = std::max(h.size(), v.size()) + 2;
        head += h + std::string(w - h.size(), ' ');
        sep += std::string(w, '-');
        row += v + std::string(w - v.size(), ' ');
    }
    os << head << "\n" << sep << "\n" << row << "\n";
    return os.str();
}

}  // namespace rmap::metrics
