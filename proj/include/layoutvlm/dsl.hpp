#pragma once

// The scene-program text format. One statement per line:
//
//   bed_0.set_pose(x=2.0, y=1.2, z=0.25, rotation=180)
//   constraints.distance(bed_0, nightstand_0, min=0.1, max=0.5)
//   constraints.on_top_of(lamp_0, nightstand_0)
//   constraints.align_with(nightstand_0, bed_0, angle=0)
//   constraints.point_towards(chair_0, desk_0, angle=0)
//   constraints.against_wall(bed_0, wall_north)
//
// Angles are degrees in text and radians in memory. `#` starts a comment.
// Bad statements are skipped with a diagnostic; parsing never fails.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layoutvlm/scene.hpp"

namespace layoutvlm {

enum class ProgramOrigin { kVlmResponse, kFile, kInline };

struct ProgramText {
  std::string source;
  ProgramOrigin origin = ProgramOrigin::kInline;
};

enum class Severity { kError, kWarning };

struct Diagnostic {
  int line = 1;
  int column = 1;
  Severity severity = Severity::kError;
  std::string message;
};

inline std::string format_diagnostic(const Diagnostic& d) {
  return std::to_string(d.line) + ":" + std::to_string(d.column) + ": " +
         (d.severity == Severity::kError ? "error" : "warning") + ": " + d.message;
}

struct ParseResult {
  SceneProgram program;
  std::vector<Diagnostic> diagnostics;

  std::size_t error_count() const {
    std::size_t n = 0;
    for (const auto& d : diagnostics) n += d.severity == Severity::kError;
    return n;
  }
};

namespace detail {

struct Token {
  enum Kind { kIdent, kNumber, kPunct, kEnd } kind = kEnd;
  std::string_view text;
  int column = 1;
  double number = 0.0;
};

class StatementError {
 public:
  StatementError(int column, std::string message) : column(column), message(std::move(message)) {}
  int column;
  std::string message;
};

class LineLexer {
 public:
  explicit LineLexer(std::string_view line) : line_(line) {}

  Token next() {
    while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t' || line_[pos_] == '\r')) {
      ++pos_;
    }
    Token t;
    t.column = static_cast<int>(pos_) + 1;
    if (pos_ >= line_.size() || line_[pos_] == '#') {
      t.kind = Token::kEnd;
      return t;
    }
    const char c = line_[pos_];
    const std::size_t start = pos_;
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
      while (pos_ < line_.size() && is_word(line_[pos_])) ++pos_;
      t.kind = Token::kIdent;
    } else if ((c >= '0' && c <= '9') || c == '-' || c == '+' ||
               (c == '.' && pos_ + 1 < line_.size() && line_[pos_ + 1] >= '0' && line_[pos_ + 1] <= '9')) {
      if (c == '-' || c == '+') ++pos_;
      while (pos_ < line_.size() && (is_word(line_[pos_]) || line_[pos_] == '.' ||
                                     ((line_[pos_] == '-' || line_[pos_] == '+') &&
                                      (line_[pos_ - 1] == 'e' || line_[pos_ - 1] == 'E')))) {
        ++pos_;
      }
      t.kind = Token::kNumber;
      std::string_view body = line_.substr(start, pos_ - start);
      if (!body.empty() && body.front() == '+') body.remove_prefix(1);
      const char* first = body.data();
      const char* last = body.data() + body.size();
      auto [ptr, ec] = std::from_chars(first, last, t.number);
      if (ec != std::errc() || ptr != last || !std::isfinite(t.number)) {
        throw StatementError(t.column, "malformed number '" + std::string(line_.substr(start, pos_ - start)) + "'");
      }
    } else {
      ++pos_;
      t.kind = Token::kPunct;
    }
    t.text = line_.substr(start, pos_ - start);
    return t;
  }

 private:
  static bool is_word(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  }

  std::string_view line_;
  std::size_t pos_ = 0;
};

struct Argument {
  std::string name;  // empty for positional
  Token value;
};

class StatementParser {
 public:
  explicit StatementParser(std::string_view line) : lexer_(line) { advance(); }

  const Token& peek() const { return current_; }

  Token take() {
    Token t = current_;
    advance();
    return t;
  }

  void expect_punct(char c, const char* context) {
    if (current_.kind != Token::kPunct || current_.text.size() != 1 || current_.text[0] != c) {
      throw StatementError(current_.column, std::string("expected '") + c + "' " + context);
    }
    advance();
  }

  bool accept_punct(char c) {
    if (current_.kind == Token::kPunct && current_.text.size() == 1 && current_.text[0] == c) {
      advance();
      return true;
    }
    return false;
  }

  Token expect_ident(const char* context) {
    if (current_.kind != Token::kIdent) throw StatementError(current_.column, std::string("expected ") + context);
    return take();
  }

  /// Parses `(arg, arg, ...)` after the callee name, then the end of line.
  std::vector<Argument> arguments() {
    expect_punct('(', "to open the argument list");
    std::vector<Argument> args;
    if (!accept_punct(')')) {
      for (;;) {
        Argument a;
        if (current_.kind == Token::kIdent) {
          Token name = take();
          if (accept_punct('=')) {
            a.name = std::string(name.text);
            if (current_.kind != Token::kNumber) {
              throw StatementError(current_.column, "expected a number for '" + a.name + "'");
            }
            a.value = take();
          } else {
            a.value = name;
          }
        } else if (current_.kind == Token::kNumber) {
          a.value = take();
        } else {
          throw StatementError(current_.column, "expected an argument");
        }
        args.push_back(std::move(a));
        if (accept_punct(')')) break;
        expect_punct(',', "or ')' between arguments");
      }
    }
    accept_punct(';');
    if (current_.kind != Token::kEnd) {
      throw StatementError(current_.column, "unexpected text after statement");
    }
    return args;
  }

 private:
  void advance() { current_ = lexer_.next(); }

  LineLexer lexer_;
  Token current_;
};

struct NamedNumbers {
  std::vector<std::pair<std::string, Token>> values;

  const Token* get(std::string_view name) const {
    for (const auto& [n, t] : values) {
      if (n == name) return &t;
    }
    return nullptr;
  }
};

/// Splits numeric arguments by name; unnamed numbers are assigned to
/// `positional_names` in order.
inline NamedNumbers named_numbers(const std::vector<Argument>& args, std::size_t first,
                                  const std::vector<std::string>& allowed,
                                  const std::vector<std::string>& positional_names) {
  NamedNumbers out;
  std::size_t next_positional = 0;
  for (std::size_t i = first; i < args.size(); ++i) {
    const Argument& a = args[i];
    if (a.value.kind != Token::kNumber) {
      throw StatementError(a.value.column, "expected a number, found '" + std::string(a.value.text) + "'");
    }
    std::string name = a.name;
    if (name.empty()) {
      if (next_positional >= positional_names.size()) {
        throw StatementError(a.value.column, "too many arguments");
      }
      name = positional_names[next_positional++];
    }
    if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
      throw StatementError(a.value.column, "unknown argument '" + name + "'");
    }
    if (out.get(name)) throw StatementError(a.value.column, "duplicate argument '" + name + "'");
    out.values.emplace_back(name, a.value);
  }
  return out;
}

inline std::string format_number(double v) {
  if (std::abs(v) < 5e-5) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// Degrees in (-180, 180] for display.
inline double display_degrees(double radians) {
  double deg = rad_to_deg(normalize_theta(radians));
  if (deg <= -180.0 + 1e-9) deg += 360.0;
  return deg;
}

}  // namespace detail

inline ParseResult parse_program(const ProgramText& text, const std::set<std::string>& known_assets,
                                 const std::set<std::string>& known_walls = wall_ids()) {
  using detail::StatementError;
  using detail::Token;
  ParseResult result;
  std::string_view source = text.source;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= source.size()) {
    std::size_t end = source.find('\n', pos);
    if (end == std::string_view::npos) end = source.size();
    const std::string_view line = source.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;

    try {
      detail::StatementParser p(line);
      if (p.peek().kind == Token::kEnd) continue;
      const Token head = p.expect_ident("an asset id or 'constraints'");
      p.expect_punct('.', "after the receiver");
      const Token method = p.expect_ident("a method name");

      if (head.text == "constraints") {
        const auto kind = parse_relation_kind(method.text);
        if (!kind) {
          throw StatementError(method.column, "unknown relation '" + std::string(method.text) + "'");
        }
        const std::vector<detail::Argument> args = p.arguments();
        if (args.size() < 2 || !args[0].name.empty() || !args[1].name.empty() ||
            args[0].value.kind != Token::kIdent || args[1].value.kind != Token::kIdent) {
          throw StatementError(method.column, to_string(*kind) + " expects two ids first");
        }
        Relation r;
        r.kind = *kind;
        r.subject = std::string(args[0].value.text);
        r.target = std::string(args[1].value.text);
        if (!known_assets.count(r.subject)) {
          throw StatementError(args[0].value.column, "unknown asset '" + r.subject + "'");
        }
        if (*kind == RelationKind::kAgainstWall) {
          if (!known_walls.count(r.target)) {
            throw StatementError(args[1].value.column, "unknown wall '" + r.target + "'");
          }
        } else if (!known_assets.count(r.target)) {
          throw StatementError(args[1].value.column, "unknown asset '" + r.target + "'");
        }
        switch (*kind) {
          case RelationKind::kDistance: {
            auto nums = detail::named_numbers(args, 2, {"min", "max"}, {"min", "max"});
            const Token* lo = nums.get("min");
            const Token* hi = nums.get("max");
            if (!lo || !hi) throw StatementError(method.column, "distance needs min and max");
            r.d_min = lo->number;
            r.d_max = hi->number;
            break;
          }
          case RelationKind::kAlignWith:
          case RelationKind::kPointTowards: {
            auto nums = detail::named_numbers(args, 2, {"angle"}, {"angle"});
            if (const Token* a = nums.get("angle")) r.angle = normalize_theta(deg_to_rad(a->number));
            break;
          }
          case RelationKind::kOnTopOf:
          case RelationKind::kAgainstWall:
            detail::named_numbers(args, 2, {}, {});
            break;
        }
        if (auto problem = relation_problem(r); !problem.empty()) {
          throw StatementError(method.column, problem);
        }
        result.program.relations.push_back(std::move(r));
        continue;
      }

      if (method.text != "set_pose") {
        throw StatementError(method.column, "unknown method '" + std::string(method.text) + "'");
      }
      const std::string id(head.text);
      if (!known_assets.count(id)) throw StatementError(head.column, "unknown asset '" + id + "'");
      const std::vector<detail::Argument> args = p.arguments();
      auto nums = detail::named_numbers(args, 0, {"x", "y", "z", "rotation"}, {"x", "y", "z", "rotation"});
      const Token* x = nums.get("x");
      const Token* y = nums.get("y");
      if (!x || !y) throw StatementError(method.column, "set_pose needs x and y");
      Pose pose{x->number, y->number, 0.0, 0.0};
      if (const Token* z = nums.get("z")) {
        pose.z = z->number;
      } else {
        result.diagnostics.push_back({line_no, method.column, Severity::kWarning,
                                      "set_pose without z; the asset is put on the floor"});
      }
      if (const Token* rot = nums.get("rotation")) pose.theta = normalize_theta(deg_to_rad(rot->number));
      if (result.program.poses.count(id)) {
        result.diagnostics.push_back({line_no, head.column, Severity::kWarning,
                                      "pose for '" + id + "' set again; the later one wins"});
      }
      result.program.poses[id] = pose;
    } catch (const StatementError& e) {
      result.diagnostics.push_back({line_no, e.column, Severity::kError, e.message});
    }
  }
  return result;
}

inline ProgramText serialize_program(const SceneProgram& program) {
  using detail::format_number;
  std::ostringstream os;
  for (const auto& [id, p] : program.poses) {
    os << id << ".set_pose(x=" << format_number(p.x) << ", y=" << format_number(p.y)
       << ", z=" << format_number(p.z) << ", rotation=" << format_number(detail::display_degrees(p.theta))
       << ")\n";
  }
  for (const auto& r : program.relations) {
    os << "constraints." << to_string(r.kind) << '(' << r.subject << ", " << r.target;
    if (r.kind == RelationKind::kDistance) {
      os << ", min=" << format_number(r.d_min) << ", max=" << format_number(r.d_max);
    } else if (is_orientational(r.kind)) {
      os << ", angle=" << format_number(detail::display_degrees(r.angle));
    }
    os << ")\n";
  }
  return {os.str(), ProgramOrigin::kInline};
}

/// Contents of the first ``` fenced block (language tag dropped), or the
/// whole response when there is none.
inline ProgramText extract_code_block(std::string_view response) {
  const std::size_t open = response.find("```");
  if (open == std::string_view::npos) return {std::string(response), ProgramOrigin::kVlmResponse};
  std::size_t body = response.find('\n', open + 3);
  if (body == std::string_view::npos) return {std::string(), ProgramOrigin::kVlmResponse};
  ++body;
  std::size_t close = response.find("```", body);
  if (close == std::string_view::npos) close = response.size();
  std::string_view block = response.substr(body, close - body);
  while (!block.empty() && (block.back() == '\n' || block.back() == '\r')) block.remove_suffix(1);
  return {std::string(block), ProgramOrigin::kVlmResponse};
}

}  // namespace layoutvlm
