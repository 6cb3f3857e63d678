#include "gin/clicklog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "gin/error.hpp"

namespace gin::clicklog {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::set<std::string> tokenize_query(const std::string& text) {
  std::set<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) tokens.insert(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) tokens.insert(cur);
  return tokens;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& why) {
  throw DataError("click log parse error at line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

std::vector<ClickEvent> parse_click_log(std::istream& in) {
  std::vector<ClickEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    auto fields = split_tabs(line);
    if (fields.size() != 4) fail(line_no, "expected 4 tab-separated fields, got " + std::to_string(fields.size()));

    ClickEvent ev;
    ev.user_id = fields[0];
    if (ev.user_id.empty()) fail(line_no, "empty user id");

    const std::string& ts = fields[1];
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), value);
    if (ec != std::errc{} || ptr != ts.data() + ts.size()) fail(line_no, "non-integer timestamp '" + ts + "'");
    if (value < 0) fail(line_no, "negative timestamp");
    ev.timestamp = value;

    ev.query_tokens = tokenize_query(fields[2]);
    if (ev.query_tokens.empty()) fail(line_no, "query has no tokens");

    ev.item_id = fields[3];
    if (ev.item_id.empty()) fail(line_no, "empty item id");

    events.push_back(std::move(ev));
  }
  return events;
}

double query_similarity(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() || b.empty()) throw DataError("query_similarity: empty token set");
  std::size_t common = 0;
  for (const auto& tok : a)
    if (b.count(tok)) ++common;
  const std::size_t uni = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

std::vector<Session> segment_sessions(const std::vector<ClickEvent>& events,
                                      const SessionConfig& cfg) {
  if (cfg.jaccard_threshold < 0.0 || cfg.jaccard_threshold > 1.0)
    throw DataError("segment_sessions: jaccard threshold must be in [0,1]");
  if (cfg.max_gap_seconds <= 0) throw DataError("segment_sessions: max gap must be positive");

  for (std::size_t i = 1; i < events.size(); ++i) {
    const auto& prev = events[i - 1];
    const auto& cur = events[i];
    if (cur.user_id < prev.user_id ||
        (cur.user_id == prev.user_id && cur.timestamp < prev.timestamp))
      throw DataError("segment_sessions: events not sorted by (user_id, timestamp) at index " +
                      std::to_string(i));
  }

  std::vector<Session> sessions;
  for (const auto& ev : events) {
    bool fresh = sessions.empty() || sessions.back().user_id != ev.user_id;
    if (!fresh) {
      const ClickEvent& prev = sessions.back().events.back();
      if (ev.timestamp - prev.timestamp > cfg.max_gap_seconds ||
          query_similarity(ev.query_tokens, prev.query_tokens) < cfg.jaccard_threshold)
        fresh = true;
    }
    if (fresh) sessions.push_back(Session{ev.user_id, {}});
    sessions.back().events.push_back(ev);
  }
  return sessions;
}

void sort_events(std::vector<ClickEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const ClickEvent& a, const ClickEvent& b) {
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    return a.timestamp < b.timestamp;
  });
}

std::vector<ClickEvent> filter_max_age(const std::vector<ClickEvent>& events, int days) {
  if (days <= 0 || events.empty()) return events;
  std::int64_t max_ts = events.front().timestamp;
  for (const auto& ev : events) max_ts = std::max(max_ts, ev.timestamp);
  const std::int64_t cutoff = max_ts - static_cast<std::int64_t>(days) * 86400;
  std::vector<ClickEvent> kept;
  for (const auto& ev : events)
    if (ev.timestamp >= cutoff) kept.push_back(ev);
  return kept;
}

}  // namespace gin::clicklog
