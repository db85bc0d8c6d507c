#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reffakd/model.hpp"

namespace reffakd {

struct LayerCost {
  std::string name;
  int64_t flops = 0;
  int64_t macs = 0;
  int64_t params = 0;
  int64_t memory_bytes = 0;
};

struct ResourceReport {
  int64_t flops = 0;
  int64_t macs = 0;
  int64_t params = 0;
  int64_t memory_bytes = 0;
  std::vector<LayerCost> layers;
};

/// Static per-sample cost model. Convolutions (either direction) count
/// C_out*C_in*k*k*H_out*W_out MACs, linear layers in*out; FLOPs = 2*MACs;
/// bias adds, batch-norm and activation arithmetic are excluded. Params
/// cover weights, biases, and batch-norm scale/shift; memory is params * 4
/// (32-bit storage convention). Shape propagation here is independent of the
/// model runtime so the two counts cross-check each other.
ResourceReport profile(const ModelSpec& spec);

/// Profile with the spec's input extents overridden (shape errors name the
/// offending layer).
ResourceReport profile_at(ModelSpec spec, int channels, int h, int w);

/// Fixed-width text table, one row per layer plus a total row.
std::string format_report(const ResourceReport& report);

/// CSV with header `layer,flops,macs,params,memory_bytes` and a final total
/// row.
std::string report_csv(const ResourceReport& report);

/// Four lines `<metric>: <ratio>x` giving a's metrics over b's. Throws if
/// any of b's totals is zero.
std::string compare_reports(const ResourceReport& a, const ResourceReport& b);

}  // namespace reffakd
