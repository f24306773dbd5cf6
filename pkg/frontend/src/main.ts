import { ApiClient } from "./api";
import { App } from "./app";

const root = document.getElementById("app");
if (root) {
  const client = new ApiClient("");
  void new App(root, client).start();
}
