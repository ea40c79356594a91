#include <set>
#include <sstream>

#include "alertsieve/alerts.hpp"
#include "doctest.h"
#include "support/splitmix.hpp"

using namespace alertsieve;
using testing_support::SplitMix;

namespace {

AlertRecord make_record(std::string id, std::string cmd) {
  AlertRecord r;
  r.alert_id = std::move(id);
  r.timestamp_ms = 1700000000000;
  r.device_id = "dev-1";
  r.org_id = "org-1";
  r.command_line = std::move(cmd);
  r.parent_path = R"(C:\Windows\explorer.exe)";
  r.process_path = R"(C:\Windows\System32\cmd.exe)";
  return r;
}

std::size_t expected_padded_length(std::size_t n) {
  std::size_t reps = 1;
  while (reps * n + (reps - 1) < 50) ++reps;
  return reps * n + (reps - 1);
}

}  // namespace

TEST_CASE("proxy command lines") {
  auto r = make_record("a1", "");
  r.initiator_kind = InitiatorKind::ScheduledTask;
  r.parent_path = R"(C:\Windows\svc.exe)";
  r.process_path = R"(C:\tool.exe)";
  CHECK(synthesize_proxy_command_line(r) == R"(PROXY|ScheduledTask|C:\Windows\svc.exe|C:\tool.exe)");

  auto twin = r;
  twin.alert_id = "a2";
  CHECK(synthesize_proxy_command_line(twin) == synthesize_proxy_command_line(r));

  auto desk = make_record("a3", "");
  desk.initiator_kind = InitiatorKind::DesktopLaunch;
  desk.parent_path = "";
  desk.process_path = R"(C:\a.exe)";
  CHECK(synthesize_proxy_command_line(desk) == R"(PROXY|DesktopLaunch||C:\a.exe)");
}

TEST_CASE("padding short command lines") {
  const auto padded = pad_short_command_line("ls -la");
  CHECK(padded.size() == expected_padded_length(6));
  CHECK(padded.size() == 55);
  CHECK(padded.substr(0, 7) == "ls -la|");
  // Seven separators, one after each of the first seven copies.
  for (std::size_t copy = 1; copy < 8; ++copy) CHECK(padded[copy * 7 - 1] == '|');
  CHECK(padded == pad_short_command_line("ls -la"));

  const std::string fifty(50, 'x');
  CHECK(pad_short_command_line(fifty) == fifty);
  CHECK(pad_short_command_line("a").size() == 51);
  CHECK_THROWS_AS((void)pad_short_command_line(""), Error);

  SplitMix rng(11);
  std::set<std::string> inputs;
  std::set<std::string> outputs;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t len = 1 + rng.below(49);
    std::string s;
    for (std::size_t j = 0; j < len; ++j) s.push_back(static_cast<char>(32 + rng.below(95)));
    if (!inputs.insert(s).second) continue;
    const auto p = pad_short_command_line(s);
    CHECK(p.size() >= 50);
    CHECK(p.size() == expected_padded_length(s.size()));
    outputs.insert(p);
  }
  CHECK(outputs.size() == inputs.size());
}

TEST_CASE("padded short command lines stay digestible") {
  for (const char* cmd : {"ls -la", "whoami", "id", "ps aux", "netstat -ano", "ipconfig /all",
                          "cmd.exe /c whoami /all", "powershell -nop -w hidden", "ab"}) {
    CAPTURE(cmd);
    CHECK(tlsh::try_digest(pad_short_command_line(cmd)).has_value());
  }
  SplitMix rng(3);
  int digestible = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t len = 1 + rng.below(49);
    std::string s;
    for (std::size_t j = 0; j < len; ++j) s.push_back(static_cast<char>(32 + rng.below(95)));
    digestible += tlsh::try_digest(pad_short_command_line(s)).has_value() ? 1 : 0;
  }
  CHECK(digestible >= 9950);
}

TEST_CASE("prepare selects the effective command line") {
  const std::string long_cmd =
      R"("C:\Program Files\Vendor\agent.exe" --collect --profile C:\ProgramData\Vendor\profile.xml --verbose)";
  auto raw = make_record("r1", long_cmd + std::string(120 - long_cmd.size(), 'z'));
  REQUIRE(raw.command_line.size() == 120);
  auto p = prepare(raw);
  CHECK(p.effective_command_line == raw.command_line);
  CHECK(p.digest == tlsh::digest(raw.command_line));
  CHECK(p.parent_child_path == R"(C:\Windows\explorer.exe>C:\Windows\System32\cmd.exe)");

  auto task = make_record("r2", "");
  task.initiator_kind = InitiatorKind::ScheduledTask;
  auto pt = prepare(task);
  CHECK(pt.effective_command_line == synthesize_proxy_command_line(task));

  auto non_cmd = make_record("r3", long_cmd);
  non_cmd.initiator_kind = InitiatorKind::InProcessCreation;
  CHECK(prepare(non_cmd).effective_command_line == synthesize_proxy_command_line(non_cmd));

  auto empty_cmdline_kind = make_record("r4", "");
  CHECK(prepare(empty_cmdline_kind).effective_command_line ==
        synthesize_proxy_command_line(empty_cmdline_kind));

  auto short_proxy = make_record("r5", "");
  short_proxy.initiator_kind = InitiatorKind::Other;
  short_proxy.parent_path = "a";
  short_proxy.process_path = "bcd";
  const auto proxy = synthesize_proxy_command_line(short_proxy);
  REQUIRE(proxy.size() < 50);
  CHECK(prepare(short_proxy).effective_command_line == pad_short_command_line(proxy));

  auto short_cmd = make_record("r6", "whoami /all /fo list");
  CHECK(prepare(short_cmd).effective_command_line == pad_short_command_line("whoami /all /fo list"));

  // Pure: same record, same result.
  auto again = prepare(raw);
  CHECK(again.digest == p.digest);
  CHECK(again.effective_command_line == p.effective_command_line);
}

TEST_CASE("undigestible alerts carry the digest failure") {
  auto r = make_record("u1", "aaaa");
  try {
    (void)prepare(r);
    FAIL("expected UndigestibleAlert");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UndigestibleAlert);
    REQUIRE(e.cause().has_value());
    CHECK(*e.cause() == ErrorCode::InsufficientComplexity);
  }
}

TEST_CASE("sample command lines keep their distance relationships after prepare") {
  const char* lines[3] = {
      R"("C:\Windows\System32\rundll32.exe" shwebsvc.dll,AddNetPlaceRunDll)",
      R"("C:\WINDOWS\System32\WindowsPowerShell\v1.0\powershell.exe" ((New-Object System.Net.WebClient).OpenRead('https://www.google.com')).CanRead)",
      R"("C:\WINDOWS\System32\WindowsPowerShell\v1.0\powershell.exe" ((New-Object System.Net.WebClient).OpenRead('https://www.microsoft.com')).CanRead)",
  };
  tlsh::Digest d[3];
  for (int i = 0; i < 3; ++i) d[i] = prepare(make_record("ap" + std::to_string(i), lines[i])).digest;
  CHECK(tlsh::distance(d[1], d[2]) == 24);
  CHECK(tlsh::distance(d[0], d[1]) == 371);
  CHECK(tlsh::distance(d[0], d[2]) == 385);
}

TEST_CASE("alert stream parsing") {
  const auto& schema = FeatureSchema::standard();
  auto a = make_record("s1", "cmd one");
  a.features[0] = "T1059";
  a.label = Label::Malicious;
  auto b = make_record("s2", "cmd two");
  auto c = make_record("s3", "cmd three");
  c.initiator_kind = InitiatorKind::DesktopLaunch;

  SUBCASE("valid lines in order") {
    std::stringstream ss;
    ss << schema_header_line(schema) << "\n"
       << to_json_line(a, schema) << "\n"
       << to_json_line(b, schema) << "\n"
       << to_json_line(c, schema) << "\n";
    auto items = parse_alert_stream(ss);
    REQUIRE(items.size() == 3);
    CHECK(std::get<AlertRecord>(items[0]) == a);
    CHECK(std::get<AlertRecord>(items[1]) == b);
    CHECK(std::get<AlertRecord>(items[2]) == c);
  }

  SUBCASE("malformed line is isolated") {
    std::stringstream ss;
    ss << to_json_line(a, schema) << "\n{not json\n" << to_json_line(c, schema) << "\n";
    auto items = parse_alert_stream(ss);
    REQUIRE(items.size() == 3);
    CHECK(std::get<AlertRecord>(items[0]).alert_id == "s1");
    REQUIRE(std::holds_alternative<MalformedRecord>(items[1]));
    CHECK(std::get<MalformedRecord>(items[1]).line_number == 2);
    CHECK(std::get<AlertRecord>(items[2]).alert_id == "s3");
  }

  SUBCASE("empty stream") {
    std::stringstream ss;
    CHECK(parse_alert_stream(ss).empty());
  }

  SUBCASE("record-level validation") {
    std::stringstream ss;
    ss << R"({"alert_id":"x1","timestamp":0,"device_id":"d","org_id":"o"})" << "\n"
       << R"({"alert_id":"","timestamp":5,"device_id":"d","org_id":"o"})" << "\n"
       << R"({"alert_id":"x3","timestamp":5,"device_id":"d","org_id":"o","features":{"bogus":"v"}})" << "\n"
       << R"({"alert_id":"x4","timestamp":5,"device_id":"d","org_id":"o","initiator_kind":"Telepathy"})" << "\n"
       << R"({"alert_id":"x5","timestamp":5,"device_id":"d","org_id":"o","features":{"mitre_ttps":"T1003"}})" << "\n"
       << R"({"alert_id":"x5","timestamp":6,"device_id":"d","org_id":"o"})" << "\n";
    auto items = parse_alert_stream(ss);
    REQUIRE(items.size() == 6);
    for (int i : {0, 1, 2, 3, 5}) CHECK(std::holds_alternative<MalformedRecord>(items[i]));
    const auto& ok = std::get<AlertRecord>(items[4]);
    CHECK(ok.features[0] == "T1003");
    CHECK(ok.features[1] == kUnknownValue);
    CHECK(ok.initiator_kind == InitiatorKind::CommandLine);
    CHECK_FALSE(ok.label.has_value());
  }

  SUBCASE("custom schema header reorders features") {
    auto names = schema.names();
    std::swap(names[0], names[27]);
    FeatureSchema custom(names);
    std::stringstream ss;
    ss << schema_header_line(custom) << "\n" << to_json_line(a, custom) << "\n";
    AlertStreamReader reader(ss);
    auto item = reader.next();
    REQUIRE(item.has_value());
    CHECK(reader.schema() == custom);
    CHECK(std::get<AlertRecord>(*item).features[0] == "T1059");
    CHECK_FALSE(reader.next().has_value());
  }
}

TEST_CASE("well-formed records survive any interleaving of garbage") {
  const auto& schema = FeatureSchema::standard();
  SplitMix rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::stringstream ss;
    std::vector<std::string> expected;
    for (int i = 0; i < 40; ++i) {
      if (rng.below(3) == 0) {
        ss << "garbage " << rng.next() << "\n";
      } else {
        auto r = make_record("t" + std::to_string(trial) + "-" + std::to_string(i), "x");
        expected.push_back(r.alert_id);
        ss << to_json_line(r, schema) << "\n";
      }
    }
    std::vector<std::string> got;
    for (auto& item : parse_alert_stream(ss)) {
      if (auto* r = std::get_if<AlertRecord>(&item)) got.push_back(r->alert_id);
    }
    CHECK(got == expected);
  }
}

TEST_CASE("feature schema validation") {
  CHECK_THROWS_AS(FeatureSchema(std::vector<std::string>(27, "x")), Error);
  auto names = FeatureSchema::standard().names();
  names[3] = names[4];
  CHECK_THROWS_AS(FeatureSchema{names}, Error);
  CHECK(FeatureSchema::standard().names().size() == 28);
  CHECK(FeatureSchema::standard().index_of("mitre_ttps") == 0u);
  CHECK(FeatureSchema::standard().name(27) == "custom_17");
}
