#include "pprec/data/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pprec/common/error.hpp"

namespace pprec::data {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path);
  }
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
  if (!out) {
    throw DataError("cannot write " + path);
  }
  return out;
}

[[noreturn]] void line_error(const std::string& path, std::size_t line, const std::string& what) {
  throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

json parse_line(const std::string& path, std::size_t line_no, const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    line_error(path, line_no, "not a JSON object");
  }
  return j;
}

}  // namespace

std::vector<RawNews> read_news_jsonl(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<RawNews> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(path, line_no, line);
    try {
      RawNews n;
      n.id = j.at("id").get<std::string>();
      n.title = j.at("title").get<std::string>();
      n.entities = j.at("entities").get<std::vector<std::string>>();
      n.publish_ts = j.at("publish_ts").get<std::int64_t>();
      n.topic = j.at("topic").get<std::string>();
      if (n.publish_ts <= 0) {
        line_error(path, line_no, "publish_ts must be positive");
      }
      out.push_back(std::move(n));
    } catch (const json::exception& e) {
      line_error(path, line_no, e.what());
    }
  }
  return out;
}

void write_news_jsonl(const std::string& path, const std::vector<RawNews>& news) {
  std::ofstream out = open_out(path);
  for (const RawNews& n : news) {
    ordered_json j;
    j["id"] = n.id;
    j["title"] = n.title;
    j["entities"] = n.entities;
    j["publish_ts"] = n.publish_ts;
    j["topic"] = n.topic;
    out << j.dump() << "\n";
  }
}

std::vector<RawImpression> read_impressions_jsonl(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<RawImpression> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(path, line_no, line);
    try {
      RawImpression imp;
      imp.user = j.at("user").get<std::string>();
      imp.ts = j.at("ts").get<std::int64_t>();
      for (const json& item : j.at("items")) {
        if (!item.is_array() || item.size() != 2) {
          line_error(path, line_no, "items entries must be [newsId, clicked]");
        }
        const int clicked = item[1].get<int>();
        if (clicked != 0 && clicked != 1) {
          line_error(path, line_no, "clicked must be 0 or 1");
        }
        imp.items.emplace_back(item[0].get<std::string>(), clicked);
      }
      if (imp.items.empty()) {
        line_error(path, line_no, "impression has no items");
      }
      out.push_back(std::move(imp));
    } catch (const json::exception& e) {
      line_error(path, line_no, e.what());
    }
  }
  return out;
}

void write_impressions_jsonl(const std::string& path, const std::vector<RawImpression>& imps) {
  std::ofstream out = open_out(path);
  for (const RawImpression& imp : imps) {
    ordered_json items = ordered_json::array();
    for (const auto& [id, clicked] : imp.items) {
      items.push_back({id, clicked});
    }
    ordered_json j;
    j["user"] = imp.user;
    j["ts"] = imp.ts;
    j["items"] = std::move(items);
    out << j.dump() << "\n";
  }
}

std::vector<ClickEvent> read_clicks_tsv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<ClickEvent> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      line_error(path, line_no, "expected user<TAB>news<TAB>ts");
    }
    ClickEvent ev;
    ev.user = line.substr(0, t1);
    ev.news = line.substr(t1 + 1, t2 - t1 - 1);
    const char* first = line.data() + t2 + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, ev.ts);
    if (ec != std::errc{} || ptr != last) {
      line_error(path, line_no, "bad timestamp");
    }
    out.push_back(std::move(ev));
  }
  return out;
}

void write_clicks_tsv(const std::string& path, const std::vector<ClickEvent>& clicks) {
  std::ofstream out = open_out(path);
  for (const ClickEvent& ev : clicks) {
    out << ev.user << "\t" << ev.news << "\t" << ev.ts << "\n";
  }
}

EmbeddingFile read_embeddings(const std::string& path, std::size_t expected_dim) {
  std::ifstream in = open_in(path);
  EmbeddingFile file;
  file.dim = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) {
      line_error(path, line_no, "missing token");
    }
    std::vector<double> vec;
    vec.reserve(expected_dim);
    double v;
    while (ss >> v) {
      vec.push_back(v);
    }
    if (!ss.eof()) {
      line_error(path, line_no, "non-numeric embedding value");
    }
    if (vec.size() != expected_dim) {
      line_error(path, line_no, "expected " + std::to_string(expected_dim) + " values, got " +
                                    std::to_string(vec.size()));
    }
    file.vectors[token] = std::move(vec);
  }
  return file;
}

}  // namespace pprec::data
