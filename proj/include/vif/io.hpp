#pragma once

/**
 * @file
 * @brief File formats: survival/ranking CSVs, edge lists, influence tables,
 * and the binary parameter checkpoint.
 *
 * Checkpoint layout: the 9 bytes "VIFCKPT1\n", a little-endian uint64 header
 * length, a JSON header of that length, then dim little-endian IEEE-754
 * doubles.
 */

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vif/attributor.hpp"
#include "vif/coxloss.hpp"
#include "vif/embedloss.hpp"
#include "vif/errors.hpp"
#include "vif/losscore.hpp"
#include "vif/ltrloss.hpp"

namespace vif::io {

using nlohmann::json;

/// Shortest text that round-trips the double exactly.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    fail(ErrorCode::DataError, where + ": '" + t + "' is not a number");
  }
  require(used == t.size(), ErrorCode::DataError, where + ": '" + t + "' is not a number");
  return v;
}

inline long long parse_int(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(t, &used);
  } catch (const std::exception&) {
    fail(ErrorCode::DataError, where + ": '" + t + "' is not an integer");
  }
  require(used == t.size(), ErrorCode::DataError, where + ": '" + t + "' is not an integer");
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::DataError, "cannot open " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::DataError, "cannot write " + path);
  return out;
}

/// Rows of a headed CSV; the header is returned separately.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

inline CsvTable read_csv(const std::string& path) {
  auto in = open_in(path);
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    for (auto& c : cells) c = trim(c);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    require(cells.size() == t.header.size(), ErrorCode::DataError,
            path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) + " columns, got " +
                std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  require(!t.header.empty(), ErrorCode::DataError, path + ": empty file");
  return t;
}

// ---------------------------------------------------------------------------
// Survival data: y,delta,x1..xd
// ---------------------------------------------------------------------------

inline void write_survival_csv(const std::string& path, const SurvivalDataset& d) {
  auto out = open_out(path);
  out << "y,delta";
  for (std::size_t j = 0; j < d.features(); ++j) out << ",x" << j + 1;
  out << "\n";
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    out << format_double(d.y[i]) << "," << d.delta[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) out << "," << format_double(d.x(i, j));
    out << "\n";
  }
}

inline SurvivalDataset read_survival_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  require(t.header.size() >= 3 && t.header[0] == "y" && t.header[1] == "delta", ErrorCode::DataError,
          path + ": header must be y,delta,x1..xd");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  const auto d = static_cast<Eigen::Index>(t.header.size() - 2);
  SurvivalDataset data;
  data.x.resize(n, d);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    const std::string where = path + ":" + std::to_string(t.line_numbers[static_cast<std::size_t>(i)]);
    data.y[i] = parse_double(row[0], where);
    const long long delta = parse_int(row[1], where);
    require(delta == 0 || delta == 1, ErrorCode::DataError, where + ": delta must be 0 or 1");
    data.delta.push_back(static_cast<int>(delta));
    for (Eigen::Index j = 0; j < d; ++j) data.x(i, j) = parse_double(row[static_cast<std::size_t>(j + 2)], where);
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// Edge list: "u v" per line, '#' comments
// ---------------------------------------------------------------------------

inline void write_edge_list(const std::string& path, const Graph& g) {
  auto out = open_out(path);
  out << "# nodes " << g.size() << "\n";
  for (auto [u, v] : g.edges()) out << u << " " << v << "\n";
}

/// Node count comes from a "# nodes N" comment when present, else max id + 1.
inline Graph read_edge_list(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::optional<std::size_t> declared;
  std::size_t max_id = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path + ":" + std::to_string(lineno);
    std::string body = line;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      std::istringstream comment(line.substr(hash + 1));
      std::string word;
      long long count = 0;
      if (comment >> word && word == "nodes" && comment >> count) {
        require(count >= 0, ErrorCode::DataError, where + ": negative node count");
        declared = static_cast<std::size_t>(count);
      }
      body = line.substr(0, hash);
    }
    body = trim(body);
    if (body.empty()) continue;
    std::istringstream ss(body);
    std::string a, b, extra;
    require(static_cast<bool>(ss >> a >> b) && !(ss >> extra), ErrorCode::DataError,
            where + ": expected 'u v'");
    const long long u = parse_int(a, where), v = parse_int(b, where);
    require(u >= 0 && v >= 0, ErrorCode::DataError, where + ": node ids must be non-negative");
    edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
    max_id = std::max({max_id, static_cast<std::size_t>(u), static_cast<std::size_t>(v)});
  }
  const std::size_t n = declared ? *declared : (edges.empty() ? 0 : max_id + 1);
  return Graph(n, std::move(edges));
}

// ---------------------------------------------------------------------------
// Ranking data: queries.csv (query_id,x1..xp), labels.csv (query_id,position,item_id)
// ---------------------------------------------------------------------------

inline void write_ranking_csv(const std::string& queries_path, const std::string& labels_path,
                              const RankingDataset& d) {
  auto q = open_out(queries_path);
  q << "query_id";
  for (std::size_t j = 0; j < d.features(); ++j) q << ",x" << j + 1;
  q << "\n";
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    q << i;
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) q << "," << format_double(d.x(i, j));
    q << "\n";
  }
  auto l = open_out(labels_path);
  l << "query_id,position,item_id\n";
  for (std::size_t i = 0; i < d.lists.size(); ++i)
    for (std::size_t pos = 0; pos < d.lists[i].size(); ++pos) l << i << "," << pos + 1 << "," << d.lists[i][pos] << "\n";
}

inline RankingDataset read_ranking_csv(const std::string& queries_path, const std::string& labels_path,
                                       std::size_t n_items) {
  const CsvTable q = read_csv(queries_path);
  require(q.header.size() >= 2 && q.header[0] == "query_id", ErrorCode::DataError,
          queries_path + ": header must be query_id,x1..xp");
  RankingDataset d;
  d.n_items = n_items;
  const auto m = static_cast<Eigen::Index>(q.rows.size());
  const auto p = static_cast<Eigen::Index>(q.header.size() - 1);
  d.x.resize(m, p);
  std::map<long long, std::size_t> row_of;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& row = q.rows[static_cast<std::size_t>(i)];
    const std::string where = queries_path + ":" + std::to_string(q.line_numbers[static_cast<std::size_t>(i)]);
    const long long id = parse_int(row[0], where);
    require(row_of.emplace(id, static_cast<std::size_t>(i)).second, ErrorCode::DataError,
            where + ": duplicate query_id " + std::to_string(id));
    for (Eigen::Index j = 0; j < p; ++j) d.x(i, j) = parse_double(row[static_cast<std::size_t>(j + 1)], where);
  }
  d.lists.assign(static_cast<std::size_t>(m), {});

  const CsvTable l = read_csv(labels_path);
  require(l.header.size() == 3 && l.header[0] == "query_id" && l.header[1] == "position" && l.header[2] == "item_id",
          ErrorCode::DataError, labels_path + ": header must be query_id,position,item_id");
  for (std::size_t r = 0; r < l.rows.size(); ++r) {
    const std::string where = labels_path + ":" + std::to_string(l.line_numbers[r]);
    const long long id = parse_int(l.rows[r][0], where);
    const long long pos = parse_int(l.rows[r][1], where);
    const long long item = parse_int(l.rows[r][2], where);
    const auto it = row_of.find(id);
    require(it != row_of.end(), ErrorCode::DataError, where + ": unknown query_id " + std::to_string(id));
    auto& list = d.lists[it->second];
    require(pos == static_cast<long long>(list.size()) + 1, ErrorCode::DataError,
            where + ": positions must be 1..k ascending per query");
    require(item >= 0, ErrorCode::DataError, where + ": negative item id");
    list.push_back(static_cast<std::size_t>(item));
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Influence tables
// ---------------------------------------------------------------------------

inline void write_influences_csv(const std::string& path, const std::vector<InfluenceRecord>& records) {
  auto out = open_out(path);
  out << "object_id,test_id,vif,loo\n";
  for (const auto& r : records) {
    out << r.object_id << "," << r.test_id << "," << format_double(r.vif_score) << ",";
    if (r.loo_score) out << format_double(*r.loo_score);
    out << "\n";
  }
}

/// Reads influences.csv (object_id,test_id,vif,loo) or loo.csv (object_id,test_id,loo).
inline std::vector<InfluenceRecord> read_scores_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const bool with_vif = t.header == std::vector<std::string>{"object_id", "test_id", "vif", "loo"};
  const bool loo_only = t.header == std::vector<std::string>{"object_id", "test_id", "loo"};
  require(with_vif || loo_only, ErrorCode::DataError,
          path + ": header must be object_id,test_id,vif,loo or object_id,test_id,loo");
  std::vector<InfluenceRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path + ":" + std::to_string(t.line_numbers[r]);
    InfluenceRecord rec;
    const long long obj = parse_int(row[0], where), test = parse_int(row[1], where);
    require(obj >= 0 && test >= 0, ErrorCode::DataError, where + ": ids must be non-negative");
    rec.object_id = static_cast<std::size_t>(obj);
    rec.test_id = static_cast<std::size_t>(test);
    if (with_vif) {
      rec.vif_score = parse_double(row[2], where);
      if (!row[3].empty()) rec.loo_score = parse_double(row[3], where);
    } else {
      rec.loo_score = parse_double(row[2], where);
    }
    out.push_back(rec);
  }
  return out;
}

inline void write_loo_csv(const std::string& path, const std::vector<InfluenceRecord>& records) {
  auto out = open_out(path);
  out << "object_id,test_id,loo\n";
  for (const auto& r : records) out << r.object_id << "," << r.test_id << "," << format_double(*r.loo_score) << "\n";
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "VIFCKPT1\n";

inline json layout_to_json(const ParamLayout& layout) {
  json segs = json::array();
  for (const auto& s : layout.segments()) segs.push_back({{"name", s.name}, {"offset", s.offset}, {"length", s.length}});
  return segs;
}

inline ParamLayout layout_from_json(const json& segs) {
  ParamLayout layout;
  for (const auto& s : segs) {
    require(s.at("offset").get<std::size_t>() == layout.dim(), ErrorCode::DataError,
            "checkpoint layout segments are not contiguous");
    layout.add(s.at("name").get<std::string>(), s.at("length").get<std::size_t>());
  }
  return layout;
}

struct Checkpoint {
  ParamVector params;
  json header;  // dim, layout, config_hash, plus caller fields
};

namespace detail {
inline void put_u64_le(std::ostream& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xff));
}
inline std::uint64_t get_u64_le(std::istream& in) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    const int c = in.get();
    require(c != EOF, ErrorCode::DataError, "checkpoint truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return v;
}
}  // namespace detail

inline void write_checkpoint(const std::string& path, const ParamVector& params, json header) {
  header["dim"] = static_cast<std::size_t>(params.theta.size());
  header["layout"] = layout_to_json(params.layout);
  const std::string text = header.dump();
  auto out = open_out(path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  detail::put_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Eigen::Index j = 0; j < params.theta.size(); ++j) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(params.theta[j]));
  require(out.good(), ErrorCode::DataError, "failed writing " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  auto in = open_in(path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof magic);
  require(in.gcount() == sizeof magic && std::string(magic, sizeof magic) == kCheckpointMagic, ErrorCode::DataError,
          path + ": not a checkpoint");
  const std::uint64_t len = detail::get_u64_le(in);
  require(len < (1ULL << 30), ErrorCode::DataError, path + ": implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<std::uint64_t>(in.gcount()) == len, ErrorCode::DataError, path + ": checkpoint truncated");
  Checkpoint ck;
  try {
    ck.header = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::DataError, path + ": bad checkpoint header: " + e.what());
  }
  const auto dim = ck.header.at("dim").get<std::size_t>();
  ParamLayout layout = layout_from_json(ck.header.at("layout"));
  require(layout.dim() == dim, ErrorCode::DataError, path + ": layout does not match dim");
  Vector theta(static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < dim; ++j) theta[static_cast<Eigen::Index>(j)] = std::bit_cast<double>(detail::get_u64_le(in));
  require(in.get() == EOF, ErrorCode::DataError, path + ": trailing bytes after parameters");
  ck.params = ParamVector(std::move(theta), std::move(layout));
  return ck;
}

}  // namespace vif::io
