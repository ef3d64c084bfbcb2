#include "dlarc/param_io.hpp"

#include <fstream>
#include <sstream>

#include "dlarc/csv.hpp"
#include "dlarc/error.hpp"

namespace dlarc::nc {

namespace {

std::string shape_field(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape(const std::string& f, const std::string& ctx) {
  if (f == "scalar") return {};
  Shape s;
  std::size_t start = 0;
  while (start <= f.size()) {
    auto pos = f.find('x', start);
    const auto part = f.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (part.empty()) throw DataError(ctx + ": bad shape '" + f + "'");
    std::size_t used = 0;
    unsigned long long d = 0;
    try {
      d = std::stoull(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size()) throw DataError(ctx + ": bad shape '" + f + "'");
    s.push_back(static_cast<std::size_t>(d));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return s;
}

}  // namespace

std::string format_params(const std::vector<NamedTensor>& params) {
  std::ostringstream out;
  for (const auto& [name, t] : params) {
    out << name << ',' << shape_field(t.shape());
    for (double v : t.values()) out << ',' << csv::format_double(v);
    out << '\n';
  }
  return out.str();
}

std::vector<NamedTensor> parse_params(const std::string& text) {
  std::vector<NamedTensor> out;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string ctx = "parameter row " + std::to_string(row);
    auto fields = csv::split_line(line);
    if (fields.size() < 2 || fields[0].empty()) throw DataError(ctx + ": expected name,shape,values...");
    Shape shape = parse_shape(fields[1], ctx);
    if (fields.size() - 2 != numel(shape)) {
      throw DataError(ctx + ": '" + fields[0] + "' has " + std::to_string(fields.size() - 2) +
                      " values for shape " + to_string(shape));
    }
    std::vector<double> values;
    values.reserve(fields.size() - 2);
    for (std::size_t i = 2; i < fields.size(); ++i) values.push_back(csv::parse_double(fields[i], ctx));
    out.emplace_back(fields[0], Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_params(const std::filesystem::path& path, const std::vector<NamedTensor>& params) {
  csv::write_text(path, format_params(params));
}

std::vector<NamedTensor> load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_params(ss.str());
}

}  // namespace dlarc::nc
