#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dpm/gmm.hpp"

namespace dpm::cli {

// Long format, one row per (unit, time):
//   unit,time,y[,x_1_1,...]            ARP, MAR1
//   unit,time,y_1..y_M[,x_1_1,...]     VAR1 (NET3 uses y_1..y_3 for the dyads)
// Rows with time <= 0 carry the initial block. Their covariates are ignored
// for ARP and required otherwise.
std::vector<std::string> panel_header(const ModelSpec& spec);

Dataset read_panel(std::istream& in, const ModelSpec& spec, const std::string& origin);
Dataset read_panel_file(const std::string& path, const ModelSpec& spec);
void write_panel(std::ostream& out, const Dataset& data);

// shortest decimal text that reads back to the same double
std::string format_double(double v);

} // namespace dpm::cli
