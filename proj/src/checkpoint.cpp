#include "otbb/checkpoint.hpp"

#include "otbb/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace otbb {

namespace {

const char* const kBlocks[] = {"phi", "rho", "s", "lambda", "rho_begin", "rho_end"};

template <class State>
auto* block(State& st, const std::string& name) {
  using Ptr = decltype(&st.phi);
  if (name == "phi") return &st.phi;
  if (name == "rho") return &st.rho;
  if (name == "s") return &st.s;
  if (name == "lambda") return &st.lambda;
  if (name == "rho_begin") return &st.rho_begin;
  if (name == "rho_end") return &st.rho_end;
  return Ptr{nullptr};
}

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

void write_checkpoint(const std::string& stem, const PrimalDualState& st,
                      const Discretization& d) {
  std::ofstream out(stem + ".txt");
  if (!out) throw InputError("cannot write checkpoint " + stem + ".txt");
  out << std::setprecision(17);
  for (const char* name : kBlocks) {
    const VecX& v = *block(st, name);
    out << name << ' ' << v.size() << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i] << '\n';
  }
  if (!out) throw InputError("write failed for " + stem + ".txt");

  nlohmann::json meta;
  meta["mu"] = st.mu;
  meta["K"] = d.grid.K;
  meta["mesh_hash"] = hex(mesh_hash(d.mesh.coarse));
  meta["n"] = st.phi.size();
  meta["m"] = st.rho.size();
  std::ofstream js(stem + ".json");
  if (!js) throw InputError("cannot write checkpoint " + stem + ".json");
  js << meta.dump(2) << '\n';
}

CheckpointInfo read_checkpoint_info(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw InputError("cannot open checkpoint " + stem + ".json");
  CheckpointInfo info;
  try {
    const auto meta = nlohmann::json::parse(js);
    info.mu = meta.at("mu").get<double>();
    info.K = meta.at("K").get<int>();
    info.mesh_hash = std::stoull(meta.at("mesh_hash").get<std::string>(), nullptr, 16);
    info.n = meta.at("n").get<long>();
    info.m = meta.at("m").get<long>();
  } catch (const std::exception& e) {
    throw ParseError("malformed checkpoint metadata " + stem + ".json: " + e.what());
  }
  return info;
}

PrimalDualState read_checkpoint(const std::string& stem, const Discretization& d) {
  const CheckpointInfo info = read_checkpoint_info(stem);
  if (info.K != d.grid.K || info.mesh_hash != mesh_hash(d.mesh.coarse))
    throw InputError("checkpoint " + stem + " was written for another discretization");
  std::ifstream in(stem + ".txt");
  if (!in) throw InputError("cannot open checkpoint " + stem + ".txt");
  PrimalDualState st;
  st.mu = info.mu;
  for (const char* expected : kBlocks) {
    std::string name;
    long len = -1;
    if (!(in >> name >> len) || name != expected || len < 0)
      throw ParseError("checkpoint " + stem + ".txt: expected block '" +
                       std::string(expected) + "'");
    VecX& v = *block(st, name);
    v.resize(len);
    for (long i = 0; i < len; ++i)
      if (!(in >> v[i])) throw ParseError("checkpoint " + stem + ".txt: short block " + name);
  }
  if (st.phi.size() != info.n || st.rho.size() != info.m || st.s.size() != info.m)
    throw ParseError("checkpoint " + stem + ": block sizes disagree with metadata");
  return st;
}

}  // namespace otbb
