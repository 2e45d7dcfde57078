// Reference recognition service speaking the JSON-lines oracle protocol,
// backed by the built-in matcher. Serves stdin/stdout, or HTTP with --http.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "realface/error.hpp"
#include "realface/harness.hpp"
#include "realface/protocol.hpp"

#include <httplib.h>

int main(int argc, char** argv) {
  CLI::App app{"Loopback face recognition service"};
  std::string config_path;
  std::string manifest_path;
  std::string metric_name = "euclidean";
  int http_port = 0;
  int ignore_first = 0;
  auto* source = app.add_option_group("gallery");
  source->add_option("--config", config_path, "Enrol the gallery a run config describes")->check(CLI::ExistingFile);
  source->add_option("--gallery", manifest_path, "Enrol a gallery manifest")->check(CLI::ExistingFile);
  source->require_option(1);
  app.add_option("--metric", metric_name, "euclidean | cosine | confidence");
  app.add_option("--http", http_port, "Listen on 127.0.0.1:PORT instead of stdio (0 picks a free port)");
  app.add_option("--ignore-first", ignore_first, "Silently drop this many stdio requests (exercises client retries)");
  CLI11_PARSE(app, argc, argv);

  try {
    realface::Metric metric = realface::parse_metric(metric_name);
    std::optional<realface::Gallery> gallery;
    if (!config_path.empty()) {
      const auto config = realface::load_run_config(config_path);
      metric = config.metric;
      const realface::Workspace ws(config);
      gallery.emplace(ws.enrolled_gallery(config.gallery));
    } else {
      auto manifest = realface::load_gallery_manifest(manifest_path);
      gallery.emplace(realface::enroll(manifest.faces, manifest.embedding));
    }

    if (app.count("--http")) {
      httplib::Server server;
      server.Post("/match", [&](const httplib::Request& req, httplib::Response& res) {
        res.set_content(realface::protocol::handle_frame(req.body, *gallery, metric) + "\n", "application/json");
      });
      const int port = http_port > 0 ? (server.bind_to_port("127.0.0.1", http_port) ? http_port : -1)
                                     : server.bind_to_any_port("127.0.0.1");
      if (port < 0) throw realface::IoError("cannot bind 127.0.0.1:" + std::to_string(http_port));
      std::cout << "listening " << port << std::endl;
      server.listen_after_bind();
      return 0;
    }

    std::string line;
    while (std::getline(std::cin, line)) {
      if (line.empty()) continue;
      if (ignore_first > 0) {
        --ignore_first;
        continue;
      }
      std::cout << realface::protocol::handle_frame(line, *gallery, metric) << std::endl;
    }
  } catch (const realface::Error& e) {
    std::cerr << e.kind() << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
