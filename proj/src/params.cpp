#include "scai/params.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace scai {

std::size_t ParameterStore::add(std::string name, Shape shape, std::vector<double> values) {
  if (values.size() != numel(shape)) {
    throw ShapeError("parameter " + name + ": " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  if (contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  const std::size_t idx = params_.size();
  index_.emplace(name, idx);
  params_.push_back({std::move(name), std::move(shape), std::make_shared<std::vector<double>>(std::move(values))});
  return idx;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.values->size();
  return n;
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const auto& p : params_) out.add(p.name, p.shape, *p.values);
  return out;
}

void ParameterStore::assign_values(const ParameterStore& other) {
  if (other.size() != size()) throw std::invalid_argument("assign_values: parameter count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || params_[i].shape != other.params_[i].shape) {
      throw std::invalid_argument("assign_values: layout mismatch at " + params_[i].name);
    }
    *params_[i].values = *other.params_[i].values;
  }
}

std::vector<Tensor> ParameterStore::bind(bool requires_grad) const {
  std::vector<Tensor> leaves;
  leaves.reserve(params_.size());
  for (const auto& p : params_) leaves.push_back(Tensor::alias(p.shape, p.values, requires_grad));
  return leaves;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.shape != b.shape || *a.values != *b.values) return false;
  }
  return true;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& meta, const ParameterStore& store) {
  if (meta.find('\n') != std::string::npos) throw std::invalid_argument("checkpoint meta must be a single line");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << "scai-checkpoint 1\n";
  out << "meta " << meta << '\n';
  out << "params " << store.size() << '\n';
  for (const auto& p : store) {
    out << p.name << ' ' << p.shape.size();
    for (auto d : p.shape) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < p.values->size(); ++i) {
      if (i) out << ' ';
      out << format_double((*p.values)[i]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::size_t line_no = 0;
  std::string line;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no + 1) + ": unexpected end of checkpoint");
    }
    ++line_no;
    return line;
  };
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };

  if (next_line() != "scai-checkpoint 1") fail("not a scai checkpoint");
  Checkpoint ck;
  if (next_line().rfind("meta ", 0) != 0) fail("expected meta line");
  ck.meta = line.substr(5);
  std::size_t count = 0;
  {
    std::istringstream hs(next_line());
    std::string tag;
    if (!(hs >> tag >> count) || tag != "params") fail("expected params count");
  }
  for (std::size_t k = 0; k < count; ++k) {
    std::istringstream hs(next_line());
    std::string name;
    std::size_t rank = 0;
    if (!(hs >> name >> rank)) fail("bad parameter header");
    Shape shape(rank);
    for (auto& d : shape)
      if (!(hs >> d)) fail("bad parameter shape for " + name);
    std::vector<double> values;
    values.reserve(numel(shape));
    const std::string& vl = next_line();
    const char* p = vl.data();
    const char* end = vl.data() + vl.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) fail("bad value for " + name);
      values.push_back(v);
      p = ptr;
    }
    if (values.size() != numel(shape)) fail("value count does not match shape for " + name);
    ck.params.add(std::move(name), std::move(shape), std::move(values));
  }
  return ck;
}

}  // namespace scai
