// stan: session analyzer service and offline tools.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>

#include <CLI11.hpp>

#include "stan/demo_model.hpp"
#include "stan/http.hpp"
#include "stan/stan.hpp"

namespace {

stan::Bytes read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) stan::fail(stan::ErrorCode::kIo, "cannot read " + path);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_all(const std::string& path, const stan::Bytes& b) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) stan::fail(stan::ErrorCode::kIo, "cannot write " + path);
}

stan::AnalysisConfig make_config(const std::string& path) {
  stan::AnalysisConfig cfg = path.empty() ? stan::AnalysisConfig{} : stan::load_config(path);
  stan::apply_env_overrides(cfg);
  return cfg;
}

std::shared_ptr<const stan::AcousticModel> make_model(const std::string& path) {
  if (path.empty()) return std::make_shared<stan::GaussianModel>(stan::demo_model());
  return std::make_shared<stan::GaussianModel>(stan::deserialize_model(read_all(path)));
}

stan::PhoneSet make_phones(const std::string& path) {
  if (path.empty()) return stan::PhoneSet::english();
  const auto b = read_all(path);
  return stan::PhoneSet::parse(std::string(b.begin(), b.end()));
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stan: stuttering-therapy session analyzer"};
  app.require_subcommand(1);

  std::string data_dir = "stan-data", bind = "127.0.0.1:8080", config_path, model_path, phones_path, ui_dir;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--data-dir", data_dir, "session store directory")->envname("STAN_DATA_DIR");
  serve->add_option("--bind", bind, "host:port on the local network")->envname("STAN_BIND");
  serve->add_option("--config", config_path, "analysis config file")->envname("STAN_CONFIG");
  serve->add_option("--model", model_path, "acoustic model file (default: bundled demo model)")
      ->envname("STAN_MODEL");
  serve->add_option("--phones", phones_path, "phone set file matching the model")->envname("STAN_PHONES");
  serve->add_option("--ui-dir", ui_dir, "static web UI assets served under /")->envname("STAN_UI_DIR");

  std::string wav, out_path;
  auto* analyze = app.add_subcommand("analyze", "analyze one WAV file and print analysis.json");
  analyze->add_option("wav", wav, "input WAV")->required()->check(CLI::ExistingFile);
  analyze->add_option("--config", config_path, "analysis config file")->envname("STAN_CONFIG");
  analyze->add_option("--model", model_path, "acoustic model file")->envname("STAN_MODEL");
  analyze->add_option("--phones", phones_path, "phone set file")->envname("STAN_PHONES");
  analyze->add_option("-o,--output", out_path, "write to file instead of stdout");

  auto* demo = app.add_subcommand("make-demo-model", "write the synthetic reference model");
  demo->add_option("-o,--output", out_path, "model file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) stan::fail(stan::ErrorCode::kInvalidConfig, "--bind must be host:port");
      std::string host = bind.substr(0, colon);
      if (host.size() > 2 && host.front() == '[') host = host.substr(1, host.size() - 2);
      const int port = std::stoi(bind.substr(colon + 1));
      if (!stan::is_local_bind_address(host)) {
        stan::fail(stan::ErrorCode::kInvalidConfig, "refusing to bind to non-local address " + host);
      }
      stan::ServiceOptions opts;
      opts.data_dir = data_dir;
      opts.config = make_config(config_path);
      opts.phones = make_phones(phones_path);
      opts.model = make_model(model_path);
      stan::Service svc(std::move(opts));

      httplib::Server server;
      server.set_payload_max_length(std::size_t{1} << 30);
      stan::mount_routes(server, svc);
      if (!ui_dir.empty() && !server.set_mount_point("/", ui_dir)) {
        stan::fail(stan::ErrorCode::kInvalidConfig, "UI directory not found: " + ui_dir);
      }
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "stan: listening on " << host << ":" << port << ", data in " << data_dir << "\n";
      if (!server.listen(host, port)) stan::fail(stan::ErrorCode::kIo, "cannot listen on " + bind);
      svc.wait_idle();
      return 0;
    }
    if (*analyze) {
      const auto cfg = make_config(config_path);
      const auto set = make_phones(phones_path);
      const auto model = make_model(model_path);
      stan::AudioClip clip = stan::decode_wav(read_all(wav), wav);
      if (clip.sample_rate != stan::kCanonicalRate) clip = stan::resample(clip, stan::kCanonicalRate);
      clip = stan::decode_wav(stan::encode_wav(clip), wav);
      const std::string text = stan::bundle_text(stan::bundle_json(stan::analyze(clip, *model, set, cfg), cfg));
      if (out_path.empty()) {
        std::cout << text;
      } else {
        write_all(out_path, stan::to_bytes(text));
      }
      return 0;
    }
    if (*demo) {
      write_all(out_path, stan::serialize_model(stan::demo_model()));
      return 0;
    }
  } catch (const stan::Error& e) {
    std::cerr << "stan: " << stan::error_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
