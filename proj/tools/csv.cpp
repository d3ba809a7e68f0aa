#include "csv.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "config.hpp"

namespace dpm::cli {

std::vector<std::string> panel_header(const ModelSpec& spec) {
  std::vector<std::string> h = {"unit", "time"};
  if (spec.family == Family::VAR1 || spec.family == Family::NET3) {
    for (int m = 1; m <= spec.layers(); ++m) h.push_back("y_" + std::to_string(m));
  } else {
    h.push_back("y");
  }
  for (int l = 1; l <= spec.layers(); ++l)
    for (int k = 1; k <= spec.Kx; ++k) h.push_back("x_" + std::to_string(l) + "_" + std::to_string(k));
  return h;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

struct Row {
  int line;
  int time;
  std::vector<int> y;
  std::vector<double> x;
  bool has_x;
};

std::string at_line(const std::string& origin, int line) { return origin + ":" + std::to_string(line) + ": "; }

int parse_int(const std::string& s, const std::string& what, const std::string& where) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw DataError(where + what + " '" + s + "' is not an integer");
  return v;
}

double parse_real(const std::string& s, const std::string& what, const std::string& where) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw DataError(where + what + " '" + s + "' is not a number");
  return v;
}

} // namespace

Dataset read_panel(std::istream& in, const ModelSpec& spec, const std::string& origin) {
  spec.check();
  const auto header = panel_header(spec);
  const bool vec = spec.family == Family::VAR1 || spec.family == Family::NET3;
  const int ny = vec ? spec.layers() : 1;
  const int nx = spec.layers() * spec.Kx;
  const int P = spec.lags();

  std::string line;
  if (!std::getline(in, line)) throw DataError(origin + ": empty file, header required");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto got = split(trim(line), ',');
  if (got != header) {
    std::string want;
    for (size_t i = 0; i < header.size(); ++i) want += (i ? "," : "") + header[i];
    throw DataError(at_line(origin, 1) + "header does not match the model, expected '" + want + "'");
  }

  std::vector<std::string> order;
  std::map<std::string, std::map<int, Row>> rows;
  int no = 1;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string where = at_line(origin, no);
    const auto f = split(t, ',');
    if (f.size() != header.size())
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(f.size()));
    if (f[0].empty()) throw DataError(where + "empty unit id");
    Row r;
    r.line = no;
    r.time = parse_int(f[1], "time", where);
    if (r.time < 1 - P || r.time > spec.T)
      throw DataError(where + "time " + std::to_string(r.time) + " outside [" + std::to_string(1 - P) + ", " +
                      std::to_string(spec.T) + "]");
    for (int j = 0; j < ny; ++j) r.y.push_back(parse_int(f[2 + j], header[2 + j], where));
    const bool pre = r.time <= 0;
    const bool need_x = !pre || spec.family != Family::ARP;
    r.has_x = false;
    bool any = false, all = true;
    for (int j = 0; j < nx; ++j) {
      const bool empty = f[2 + ny + j].empty();
      any = any || !empty;
      all = all && !empty;
    }
    if (need_x && !all) throw DataError(where + "missing covariate value");
    if (need_x || (all && spec.family != Family::ARP)) {
      for (int j = 0; j < nx; ++j) r.x.push_back(parse_real(f[2 + ny + j], header[2 + ny + j], where));
      r.has_x = true;
    }
    (void)any;
    auto& unit = rows[f[0]];
    if (unit.empty()) order.push_back(f[0]);
    if (unit.count(r.time))
      throw DataError(where + "unit '" + f[0] + "' repeats time " + std::to_string(r.time) + " (first on line " +
                      std::to_string(unit[r.time].line) + ")");
    unit[r.time] = r;
  }
  if (order.empty()) throw DataError(origin + ": no data rows");

  Dataset data;
  data.spec = spec;
  std::vector<std::map<int, Row>*> by_unit;
  for (const auto& id : order) {
    auto& m = rows[id];
    for (int t = 1 - P; t <= spec.T; ++t)
      if (!m.count(t))
        throw DataError(at_line(origin, m.begin()->second.line) + "unit '" + id + "' has no row for time " +
                        std::to_string(t));
    PanelUnit u;
    for (int t = 1 - P; t <= 0; ++t) {
      const Row& r = m[t];
      int code = 0;
      for (int j = 0; j < ny; ++j) code = vec ? (code << 1) | r.y[j] : r.y[j];
      if (vec)
        for (int j = 0; j < ny; ++j)
          if (r.y[j] != 0 && r.y[j] != 1)
            throw DataError(at_line(origin, r.line) + "outcome " + header[2 + j] + " must be 0 or 1");
      u.y0.push_back(code);
      if (r.has_x) u.x_pre.insert(u.x_pre.end(), r.x.begin(), r.x.end());
    }
    if ((int)u.x_pre.size() != P * nx) u.x_pre.clear();
    for (int t = 1; t <= spec.T; ++t) {
      const Row& r = m[t];
      int code = 0;
      for (int j = 0; j < ny; ++j) {
        if (vec && r.y[j] != 0 && r.y[j] != 1)
          throw DataError(at_line(origin, r.line) + "outcome " + header[2 + j] + " must be 0 or 1");
        code = vec ? (code << 1) | r.y[j] : r.y[j];
      }
      u.y.push_back(code);
      u.x.insert(u.x.end(), r.x.begin(), r.x.end());
    }
    data.units.push_back(std::move(u));
    by_unit.push_back(&m);
  }

  const auto bad = validate_dataset(spec, data.units);
  if (!bad.empty()) {
    std::ostringstream msg;
    const auto& v = bad.front();
    auto& m = *by_unit[v.unit];
    const int line_no = m.count(v.period) ? m[v.period].line : m.begin()->second.line;
    msg << at_line(origin, line_no) << "unit '" << order[v.unit] << "' " << v.field << ": " << v.message;
    if (bad.size() > 1) msg << " (" << bad.size() - 1 << " more problems)";
    throw DataError(msg.str());
  }
  return data;
}

Dataset read_panel_file(const std::string& path, const ModelSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return read_panel(in, spec, path);
}

void write_panel(std::ostream& out, const Dataset& data) {
  const ModelSpec& spec = data.spec;
  const auto header = panel_header(spec);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  const bool vec = spec.family == Family::VAR1 || spec.family == Family::NET3;
  const int ny = vec ? spec.layers() : 1;
  const int nx = spec.layers() * spec.Kx;
  const int P = spec.lags();
  auto outcome = [&](int code) {
    std::string s;
    if (!vec) return std::to_string(code);
    for (int j = 0; j < ny; ++j) s += (j ? "," : "") + std::to_string(bit_of(code, j, ny));
    return s;
  };
  for (size_t i = 0; i < data.units.size(); ++i) {
    const PanelUnit& u = data.units[i];
    const std::string id = std::to_string(i + 1);
    for (int t = 1 - P; t <= 0; ++t) {
      out << id << "," << t << "," << outcome(u.y0[t + P - 1]);
      const bool with_x = spec.family != Family::ARP && (int)u.x_pre.size() == P * nx;
      for (int j = 0; j < nx; ++j) out << "," << (with_x ? format_double(u.x_pre[(t + P - 1) * nx + j]) : "");
      out << "\n";
    }
    for (int t = 1; t <= spec.T; ++t) {
      out << id << "," << t << "," << outcome(u.y[t - 1]);
      for (int j = 0; j < nx; ++j) out << "," << format_double(u.x[(t - 1) * nx + j]);
      out << "\n";
    }
  }
}

} // namespace dpm::cli
