#include "mage/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace mage {
namespace {

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::map<std::string, std::string> parse_header(const std::string& line, const std::string& origin) {
  std::map<std::string, std::string> fields;
  std::istringstream in(line);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw CheckpointError(origin + ": malformed header field '" + token + "'");
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  for (const char* key : {"schema", "kind", "len", "shape"}) {
    if (!fields.count(key)) throw CheckpointError(origin + ": header lacks '" + key + "'");
  }
  return fields;
}

std::vector<std::size_t> parse_dims(const std::string& text, const std::string& origin) {
  std::vector<std::size_t> dims;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto x = text.find('x', start);
    const std::string part = text.substr(start, x == std::string::npos ? std::string::npos : x - start);
    std::size_t value = 0;
    const auto res = std::from_chars(part.data(), part.data() + part.size(), value);
    if (part.empty() || res.ec != std::errc() || res.ptr != part.data() + part.size()) {
      throw CheckpointError(origin + ": bad shape '" + text + "'");
    }
    dims.push_back(value);
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return dims;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& shape = ckpt.params.shape();
  std::string dims;
  for (std::size_t i = 0; i < shape.dims.size(); ++i) {
    if (i) dims += 'x';
    dims += std::to_string(shape.dims[i]);
  }
  std::ostringstream out;
  out << "schema=" << Checkpoint::kSchemaVersion << " kind=" << shape.kind << " len=" << ckpt.params.size()
      << " shape=" << dims << " task=" << (ckpt.provenance.task.empty() ? "-" : ckpt.provenance.task)
      << " seed=" << ckpt.provenance.seed
      << " config=" << (ckpt.provenance.config_digest.empty() ? "-" : ckpt.provenance.config_digest) << "\n";
  for (double v : ckpt.params.values()) out << format_double(v) << "\n";
  return out.str();
}

Checkpoint parse_checkpoint(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw CheckpointError(origin + ": empty checkpoint");
  const auto fields = parse_header(header, origin);
  if (fields.at("schema") != std::to_string(Checkpoint::kSchemaVersion)) {
    throw CheckpointError(origin + ": schema version " + fields.at("schema") + " is not supported (expected " +
                          std::to_string(Checkpoint::kSchemaVersion) + ")");
  }
  std::size_t expected = 0;
  {
    const auto& len = fields.at("len");
    const auto res = std::from_chars(len.data(), len.data() + len.size(), expected);
    if (res.ec != std::errc() || res.ptr != len.data() + len.size()) {
      throw CheckpointError(origin + ": bad length field '" + len + "'");
    }
  }
  ShapeTag shape{fields.at("kind"), parse_dims(fields.at("shape"), origin)};

  std::vector<double> values;
  values.reserve(expected);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double v = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size()) {
      throw CheckpointError(origin + ": unparseable value '" + line + "' at entry " +
                            std::to_string(values.size()));
    }
    if (!std::isfinite(v)) {
      throw CheckpointError(origin + ": non-finite value at entry " + std::to_string(values.size()));
    }
    values.push_back(v);
  }
  if (values.size() != expected) {
    throw CheckpointError(origin + ": expected " + std::to_string(expected) + " values, found " +
                          std::to_string(values.size()));
  }
  if (shape.element_count() != expected) {
    throw CheckpointError(origin + ": shape " + shape.to_string() + " does not hold " + std::to_string(expected) +
                          " values");
  }

  Checkpoint out{ParamVector(std::move(shape), std::move(values)), {}};
  if (fields.count("task") && fields.at("task") != "-") out.provenance.task = fields.at("task");
  if (fields.count("config") && fields.at("config") != "-") out.provenance.config_digest = fields.at("config");
  if (fields.count("seed")) {
    const auto& s = fields.at("seed");
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out.provenance.seed);
    if (res.ec != std::errc()) throw CheckpointError(origin + ": bad seed field '" + s + "'");
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out << serialize_checkpoint(ckpt);
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str(), path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.params.shape().kind != expected_kind) {
    throw CheckpointError(path.string() + ": holds a '" + ckpt.params.shape().kind + "' model, expected '" +
                          expected_kind + "'");
  }
  return ckpt;
}

}  // namespace mage
