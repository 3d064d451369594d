mod golden_hdl;
mod mutation;
mod ppa_props;
mod support;
