import { Api } from "./api.js";
import { App } from "./app.js";

// The bundle is served either standalone or by the run service under /ui;
// API paths are root-relative either way, so an empty base works for both.
const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app container");
}
void new App(root, new Api("")).start();
