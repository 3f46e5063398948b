#pragma once

#include <string>
#include <vector>

#include "slam/fit.hpp"
#include "slam/model.hpp"
#include "slam/stage_two.hpp"
#include "slam/types.hpp"

namespace slam {

// Matrix CSV conventions: comma separated, no header, 0/1 integers for
// binary matrices, "NA" for missing response cells.  Doubles are written
// with shortest round-trip formatting so reruns are byte identical.

std::string format_double(double v);

void write_bit_csv(const std::string& path, const BitMatrix& m);
BitMatrix read_bit_csv(const std::string& path);

void write_response_csv(const std::string& path, const ResponseMatrix& r);
ResponseMatrix read_response_csv(const std::string& path);

void write_real_csv(const std::string& path, const RealMatrix& m);
RealMatrix read_real_csv(const std::string& path);

// theta.csv: one row per item, "theta_plus,theta_minus".
void write_theta_csv(const std::string& path, const ItemParamsTwo& theta);
ItemParamsTwo read_theta_csv(const std::string& path);

// trace.csv: headered "iteration,q_entry_flips,objective".
void write_trace_csv(const std::string& path,
                     const std::vector<FitTraceRow>& trace);

// theta_multi.csv: headered "item,class_mask,n_obs,theta"; class_mask is the
// subject profile restricted to the item's active attributes, as a bitmask.
void write_theta_table_csv(const std::string& path, const ThetaTable& table);

// anchors.csv: one row per anchor, "item_index,q_1,...,q_K" (0-based items).
std::vector<std::pair<int, std::vector<std::uint8_t>>> read_anchors_csv(
    const std::string& path, int k);

}  // namespace slam
