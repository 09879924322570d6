#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "oaflow/matchnet.hpp"

namespace oaflow {

namespace {

constexpr const char* kMagic = "oaflow-matchnet";
constexpr int kVersion = 1;

void write_tensor(std::ostream& os, const char* name, const std::vector<double>& v) {
  os << name << ' ' << v.size();
  for (double x : v) os << ' ' << x;
  os << '\n';
}

std::vector<double> read_tensor(std::istream& is, const char* name, size_t expected) {
  std::string tag;
  size_t n = 0;
  if (!(is >> tag >> n) || tag != name)
    throw std::runtime_error(std::string("checkpoint: expected tensor '") + name + "'");
  if (n != expected)
    throw std::runtime_error(std::string("checkpoint: tensor '") + name + "' has " + std::to_string(n) +
                             " values, spec requires " + std::to_string(expected));
  std::vector<double> v(n);
  for (double& x : v)
    if (!(is >> x)) throw std::runtime_error(std::string("checkpoint: truncated tensor '") + name + "'");
  return v;
}

}  // namespace

void save_checkpoint(const NetParams& params, const std::string& path) {
  params.validate();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
  os << std::setprecision(17);
  os << kMagic << ' ' << kVersion << '\n';
  os << "layers " << params.spec.num_layers();
  for (int f : params.spec.layer_filter_counts) os << ' ' << f;
  os << "\nbatch_norm " << (params.spec.batch_norm ? 1 : 0) << '\n';
  for (const auto& l : params.layers) {
    write_tensor(os, "weight", l.conv.weight);
    write_tensor(os, "bias", l.conv.bias);
    if (params.spec.batch_norm) {
      write_tensor(os, "gamma", l.bn.gamma);
      write_tensor(os, "beta", l.bn.beta);
      write_tensor(os, "running_mean", l.bn.running_mean);
      write_tensor(os, "running_var", l.bn.running_var);
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

NetParams load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::string magic, tag;
  int version = 0, nlayers = 0, bn = 0;
  if (!(is >> magic >> version) || magic != kMagic) throw std::runtime_error("checkpoint: bad header in '" + path + "'");
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  if (!(is >> tag >> nlayers) || tag != "layers" || nlayers <= 0) throw std::runtime_error("checkpoint: bad layer count");
  NetSpec spec;
  spec.layer_filter_counts.resize(nlayers);
  for (int& f : spec.layer_filter_counts)
    if (!(is >> f)) throw std::runtime_error("checkpoint: truncated layer list");
  if (!(is >> tag >> bn) || tag != "batch_norm") throw std::runtime_error("checkpoint: missing batch_norm flag");
  spec.batch_norm = bn != 0;
  spec.validate();

  NetParams p = NetParams::init(spec, 0);
  for (auto& l : p.layers) {
    l.conv.weight = read_tensor(is, "weight", l.conv.weight.size());
    l.conv.bias = read_tensor(is, "bias", l.conv.bias.size());
    if (spec.batch_norm) {
      l.bn.gamma = read_tensor(is, "gamma", l.bn.gamma.size());
      l.bn.beta = read_tensor(is, "beta", l.bn.beta.size());
      l.bn.running_mean = read_tensor(is, "running_mean", l.bn.running_mean.size());
      l.bn.running_var = read_tensor(is, "running_var", l.bn.running_var.size());
    }
  }
  p.validate();
  return p;
}

}  // namespace oaflow
