#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "crowdmap/density_map.hpp"
#include "crowdmap/errors.hpp"
#include "crowdmap/msnn.hpp"

namespace crowdmap {

struct GradCheckGroupReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // samples discarded for sitting on a kink
};

struct GradCheckReport {
  bool pass = false;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::string worst_group;
  std::vector<GradCheckGroupReport> groups;
};

struct GradCheckConfig {
  double tolerance = 1e-4;
  double step = 1e-3;  // central-difference half step
  int samples_per_group = 24;
  std::uint64_t seed = 0;
  std::size_t max_params = 500000;  // finite differences stay tractable
};

namespace detail {

inline double half_sq_loss(const Tensor& pred, const Tensor& target) {
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred.values[i] - target.values[i];
    total += r * r;
  }
  return 0.5 * total;
}

/// Rectifier masks and pooling winners of one forward pass. A perturbation
/// that changes the signature crossed a kink, where central differences do
/// not measure the one-sided analytic derivative.
inline std::vector<std::int32_t> kink_signature(const ForwardTrace& trace) {
  std::vector<std::int32_t> sig;
  for (const auto& stream : trace.streams) {
    for (const auto& entry : stream.entries) {
      if (!entry.pool_argmax.empty()) {
        sig.insert(sig.end(), entry.pool_argmax.begin(),
                   entry.pool_argmax.end());
      } else if (entry.relu) {
        for (double v : entry.conv_out.values) {
          sig.push_back(v > 0.0 ? 1 : 0);
        }
      }
    }
  }
  return sig;
}

}  // namespace detail

/// Central-difference comparison against a caller-supplied analytic
/// gradient (layout of get_params). Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckReport grad_check_against(const Network& net,
                                          const Tensor& input,
                                          const Tensor& target,
                                          const std::vector<double>& analytic,
                                          const GradCheckConfig& cfg = {}) {
  if (net.param_count() > cfg.max_params) {
    throw ValidationError("grad_check: network exceeds the " +
                          std::to_string(cfg.max_params) + " parameter bound");
  }
  if (cfg.samples_per_group < 1) {
    throw ValidationError("grad_check: samples_per_group must be >= 1");
  }
  if (analytic.size() != net.param_count()) {
    throw ValidationError("grad_check: analytic gradient size mismatch");
  }

  std::vector<double> params;
  net.get_params(params);
  Network probe = net;

  std::mt19937_64 rng(cfg.seed);
  GradCheckReport report;
  report.tolerance = cfg.tolerance;

  for (const Network::ParamGroup& group : net.param_groups()) {
    GradCheckGroupReport gr;
    gr.name = group.name;

    std::vector<std::size_t> picks;
    if (group.count <= static_cast<std::size_t>(cfg.samples_per_group)) {
      picks.resize(group.count);
      for (std::size_t i = 0; i < group.count; ++i) picks[i] = group.offset + i;
    } else {
      std::uniform_int_distribution<std::size_t> dist(0, group.count - 1);
      while (picks.size() < static_cast<std::size_t>(cfg.samples_per_group)) {
        const std::size_t candidate = group.offset + dist(rng);
        if (std::find(picks.begin(), picks.end(), candidate) == picks.end()) {
          picks.push_back(candidate);
        }
      }
    }

    for (std::size_t idx : picks) {
      const double original = params[idx];
      params[idx] = original + cfg.step;
      probe.set_params(params);
      const ForwardTrace up_trace = forward_traced(probe, input);
      const double up = detail::half_sq_loss(up_trace.output, target);
      params[idx] = original - cfg.step;
      probe.set_params(params);
      const ForwardTrace down_trace = forward_traced(probe, input);
      const double down = detail::half_sq_loss(down_trace.output, target);
      params[idx] = original;

      if (detail::kink_signature(up_trace) !=
          detail::kink_signature(down_trace)) {
        ++gr.skipped;
        continue;
      }

      const double numeric = (up - down) / (2.0 * cfg.step);
      const double a = analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      gr.max_rel_error = std::max(gr.max_rel_error, rel);
      ++gr.checked;
    }
    probe.set_params(params);

    if (gr.max_rel_error > report.max_rel_error) {
      report.max_rel_error = gr.max_rel_error;
      report.worst_group = gr.name;
    }
    report.groups.push_back(std::move(gr));
  }

  report.pass = report.max_rel_error < cfg.tolerance;
  return report;
}

/// Compares the network's own backward pass against central finite
/// differences, with L = 0.5 * ||F(x) - gt||^2.
inline GradCheckReport grad_check(const Network& net, const Tensor& input,
                                  const DensityMap& ground_truth,
                                  const GradCheckConfig& cfg = {}) {
  const Tensor target = tensor_from_map(ground_truth);
  ForwardTrace trace = forward_traced(net, input);
  if (!same_shape(trace.output, target)) {
    throw ValidationError("grad_check: ground truth extent must match the output");
  }
  Tensor residual(trace.output.shape);
  for (std::size_t i = 0; i < residual.size(); ++i) {
    residual.values[i] = trace.output.values[i] - target.values[i];
  }
  std::vector<double> analytic(net.param_count(), 0.0);
  backward_into(net, trace, residual, analytic);
  return grad_check_against(net, input, target, analytic, cfg);
}

inline std::string format_report(const GradCheckReport& report) {
  std::string out;
  for (const auto& g : report.groups) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "%-28s checked %4zu (skipped %zu at kinks)  max rel err %.3e\n",
                  g.name.c_str(), g.checked, g.skipped, g.max_rel_error);
    out += line;
  }
  char tail[160];
  std::snprintf(tail, sizeof(tail),
                "overall max rel err %.3e (tolerance %.1e) -> %s\n",
                report.max_rel_error, report.tolerance,
                report.pass ? "PASS" : "FAIL");
  out += tail;
  if (!report.pass) {
    out += "worst group: " + report.worst_group + "\n";
  }
  return out;
}

}  // namespace crowdmap
