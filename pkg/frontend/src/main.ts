import { App } from "./app.js";

const host = document.getElementById("app");
if (host) {
  const app = new App("");
  void app.mount(host);
}
